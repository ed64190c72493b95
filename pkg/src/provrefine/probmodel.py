"""Random sub-provenance model: independent per-arc survival.

A blueprint hypergraph is partitioned by rule type; each type carries a
survival probability theta.  A random sub-hypergraph keeps every arc
independently with its type's theta.  Probabilities of events are
products over arcs, kept in log space to survive hundreds of factors.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable

from . import hypergraph as hg
from .errors import NotSubgraph, OracleLimitExceeded, ParseError
from .hypergraph import Fact, Hypergraph

NEG_INF = float("-inf")

EXACT_ARC_LIMIT = 15


@dataclass
class HyperParams:
    """Per-rule-type survival probabilities, plus unconstrained markers."""

    theta: dict = field(default_factory=dict)
    unconstrained: set = field(default_factory=set)

    def get(self, rule_type: str) -> float:
        try:
            return self.theta[rule_type]
        except KeyError:
            raise KeyError(f"no hyperparameter for rule type {rule_type!r}")

    def log_theta(self, rule_type: str) -> float:
        t = self.get(rule_type)
        return math.log(t) if t > 0.0 else NEG_INF

    def log_one_minus(self, rule_type: str) -> float:
        t = self.get(rule_type)
        return math.log1p(-t) if t < 1.0 else NEG_INF

    def copy(self) -> "HyperParams":
        return HyperParams(dict(self.theta), set(self.unconstrained))

    @staticmethod
    def uniform(rule_types: Iterable[str], value: float = 0.5) -> "HyperParams":
        return HyperParams({k: value for k in rule_types})


def validate_hyperparams(hp: HyperParams, blueprint: Hypergraph) -> None:
    missing = blueprint.rule_types() - set(hp.theta)
    if missing:
        raise KeyError(f"missing hyperparameters for rule types {sorted(missing)}")
    for k, v in hp.theta.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"theta[{k!r}] = {v} outside [0, 1]")


@dataclass
class ProbModel:
    blueprint: Hypergraph
    params: HyperParams

    def __post_init__(self):
        validate_hyperparams(self.params, self.blueprint)


def log_prob_of(m: ProbModel, h: Hypergraph) -> float:
    if not h.arcs <= m.blueprint.arcs:
        raise NotSubgraph("hypergraph is not a subgraph of the blueprint")
    total = 0.0
    for arc in m.blueprint.arcs:
        if arc in h.arcs:
            total += m.params.log_theta(arc.rule_type)
        else:
            total += m.params.log_one_minus(arc.rule_type)
    return total


def prob_of(m: ProbModel, h: Hypergraph) -> float:
    lp = log_prob_of(m, h)
    return math.exp(lp) if lp > NEG_INF else 0.0


def sample(m: ProbModel, rng: random.Random) -> Hypergraph:
    """One random sub-hypergraph; deterministic given the rng state."""
    kept = []
    for arc in m.blueprint.sorted_arcs():
        if rng.random() < m.params.get(arc.rule_type):
            kept.append(arc)
    return Hypergraph(kept)


def _enumerate_subgraphs(m: ProbModel):
    """Yield (sub-hypergraph arcs, probability) over all 2^n selections."""
    arcs = m.blueprint.sorted_arcs()
    n = len(arcs)
    theta = [m.params.get(a.rule_type) for a in arcs]
    for mask in range(1 << n):
        p = 1.0
        chosen = []
        for i in range(n):
            if mask >> i & 1:
                p *= theta[i]
                chosen.append(arcs[i])
            else:
                p *= 1.0 - theta[i]
        if p > 0.0:
            yield chosen, p


def prob_query_reach_exact(m: ProbModel, q: Fact, t: Iterable[Fact],
                           limit: int = EXACT_ARC_LIMIT) -> float:
    """Probability that q is reachable from t, by full enumeration."""
    n = len(m.blueprint)
    if n > limit:
        raise OracleLimitExceeded(
            f"exact query probability over {n} arcs (limit {limit})")
    ts = frozenset(t)
    total = 0.0
    for chosen, p in _enumerate_subgraphs(m):
        if q in hg.reach(Hypergraph(chosen), ts):
            total += p
    return total


def prob_query_reach_mc(m: ProbModel, q: Fact, t: Iterable[Fact],
                        trials: int, rng: random.Random):
    """Monte Carlo estimate; returns (estimate, standard error)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ts = frozenset(t)
    hits = 0
    for _ in range(trials):
        if q in hg.reach(sample(m, rng), ts):
            hits += 1
    p = hits / trials
    stderr = math.sqrt(p * (1.0 - p) / trials)
    return p, stderr


# ---------------------------------------------------------------------------
# hyperparameter file format: one "rule_type theta" pair per line


def parse_hyperparams(text: str, known_types: Iterable[str] = None) -> HyperParams:
    known = None if known_types is None else set(known_types)
    theta = {}
    unconstrained = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "unconstrained"):
            raise ParseError(lineno, f"expected 'rule_type theta [unconstrained]': {raw!r}")
        name, value = parts[0], parts[1]
        try:
            v = float(value)
        except ValueError:
            raise ParseError(lineno, f"malformed theta {value!r}")
        if not 0.0 <= v <= 1.0:
            raise ParseError(lineno, f"theta {v} outside [0, 1]")
        if known is not None and name not in known:
            raise ParseError(lineno, f"unknown rule type {name!r}")
        theta[name] = v
        if len(parts) == 3:
            unconstrained.add(name)
    return HyperParams(theta, unconstrained)


def serialize_hyperparams(hp: HyperParams) -> str:
    lines = []
    for name in sorted(hp.theta):
        flag = " unconstrained" if name in hp.unconstrained else ""
        lines.append(f"{name} {hp.theta[name]:.9f}{flag}\n")
    return "".join(lines)


def load_hyperparams(path: str, known_types: Iterable[str] = None) -> HyperParams:
    with open(path) as fh:
        return parse_hyperparams(fh.read(), known_types)


def save_hyperparams(hp: HyperParams, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_hyperparams(hp))
