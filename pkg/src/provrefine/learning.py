"""Maximum-likelihood fitting of per-rule survival probabilities.

Observations from several programs are merged as if they came from one
larger program (disjoint groups, one blueprint each).  The optimizer is
cyclic coordinate ascent on the likelihood lower bound: each rule type's
theta in turn is improved by a deterministic 1-D line search.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import likelihood as lk
from .analysis import Analysis, local_provenance
from .errors import CorpusTooSmall, DegenerateTrainingSet
from .hypergraph import Hypergraph
from .probmodel import NEG_INF, HyperParams

EPSILON = 1e-6


@dataclass
class ObservationGroup:
    """Observations sharing one blueprint (one program)."""

    blueprint: Hypergraph
    observations: list


@dataclass
class TrainingSet:
    groups: list = field(default_factory=list)

    @property
    def observations(self) -> list:
        return [o for g in self.groups for o in g.observations]

    def rule_types(self) -> set:
        out = set()
        for g in self.groups:
            out |= g.blueprint.rule_types()
        return out

    @staticmethod
    def merge(parts: Iterable["TrainingSet"]) -> "TrainingSet":
        merged = TrainingSet()
        for ts in parts:
            merged.groups.extend(ts.groups)
        return merged


def sample_training(an: Analysis, n: int, max_flips: int,
                    rng: random.Random) -> TrainingSet:
    """n observations from random abstractions flipping 1..max_flips params."""
    if n < 1:
        raise ValueError("need at least one sample")
    if max_flips < 1:
        raise ValueError("max_flips must be >= 1")
    max_flips = min(max_flips, len(an.params))
    blueprint = local_provenance(an, an.bottom())
    obs = []
    for _ in range(n):
        count = rng.randint(1, max_flips)
        flips = rng.sample(list(an.params), count)
        obs.append(lk.observe(an, an.bottom().with_flips(flips)))
    return TrainingSet([ObservationGroup(blueprint, obs)])


class _Objective:
    """The lower-bound log-likelihood, factored per rule type.

    Precomputes, for every type, how many refuted arcs it owns and which
    per-head formulas mention it, so a single-coordinate change only
    re-evaluates the affected heads.
    """

    def __init__(self, ts: TrainingSet):
        self.n_counts = {}
        self.heads = []  # list of clause tuples
        self._head_types = []
        for group in ts.groups:
            bf = lk.bound_terms(group.blueprint, group.observations)
            if bf.impossible:
                raise ValueError("training observation with T not within R")
            for arc in bf.negated_arcs:
                self.n_counts[arc.rule_type] = self.n_counts.get(arc.rule_type, 0) + 1
            for ph in bf.per_head.values():
                if not ph.lower_clauses:
                    continue
                self.heads.append(ph.lower_clauses)
                self._head_types.append(
                    {a.rule_type for c in ph.lower_clauses for a in c})
        self.constrained = set(self.n_counts)
        for types in self._head_types:
            self.constrained |= types
        self.heads_of_type = {
            k: [i for i, types in enumerate(self._head_types) if k in types]
            for k in self.constrained
        }

    def _head_value(self, i: int, hp: HyperParams) -> float:
        theta = {}
        for c in self.heads[i]:
            for arc in c:
                theta[arc] = hp.get(arc.rule_type)
        return lk._wmc_clauses(self.heads[i], theta)

    def value(self, hp: HyperParams) -> float:
        total = 0.0
        for k, n in self.n_counts.items():
            t = hp.get(k)
            if t >= 1.0:
                return NEG_INF
            total += n * math.log1p(-t)
        for i in range(len(self.heads)):
            v = self._head_value(i, hp)
            if v <= 0.0:
                return NEG_INF
            total += math.log(v)
        return total

    def coordinate_function(self, k: str, hp: HyperParams) -> Callable[[float], float]:
        """Objective as a function of theta_k, up to a constant."""
        n = self.n_counts.get(k, 0)
        head_ids = self.heads_of_type.get(k, [])

        def f(t: float) -> float:
            trial = hp.copy()
            trial.theta[k] = t
            total = 0.0
            if n:
                if t >= 1.0:
                    return NEG_INF
                total += n * math.log1p(-t)
            for i in head_ids:
                v = self._head_value(i, trial)
                if v <= 0.0:
                    return NEG_INF
                total += math.log(v)
            return total

        return f


def line_search(f: Callable[[float], float], lo: float, hi: float,
                tol: float = 1e-6) -> float:
    """Deterministic 1-D maximization on [lo, hi].

    Golden-section narrowing followed by a quadratic refinement; the
    endpoints always compete, and exact ties go to the leftmost point.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    evals = {}

    def ev(x: float) -> float:
        if x not in evals:
            evals[x] = f(x)
        return evals[x]

    a, b = lo, hi
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    while b - a > tol:
        if ev(c) >= ev(d):
            b, d = d, c
            c = b - gr * (b - a)
        else:
            a, c = c, d
            d = a + gr * (b - a)
    ev(lo)
    ev(hi)

    # quadratic refinement around the incumbent, when it is interior
    best = max(sorted(evals), key=lambda x: evals[x])
    near = sorted(evals)
    i = near.index(best)
    if 0 < i < len(near) - 1:
        x0, x1, x2 = near[i - 1], near[i], near[i + 1]
        y0, y1, y2 = evals[x0], evals[x1], evals[x2]
        if all(y > NEG_INF for y in (y0, y1, y2)):
            denom = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
            if abs(denom) > 1e-300:
                vertex = x1 - 0.5 * ((x1 - x0) ** 2 * (y1 - y2)
                                     - (x1 - x2) ** 2 * (y1 - y0)) / denom
                if lo <= vertex <= hi:
                    ev(vertex)

    best_val = max(evals.values())
    return min(x for x, y in evals.items() if y == best_val)


def learn(ts: TrainingSet, init: Optional[HyperParams] = None,
          tol: float = 1e-7, max_cycles: int = 100,
          eps: float = EPSILON) -> HyperParams:
    """Fit hyperparameters by cyclic coordinate ascent on the lower bound."""
    objective = _Objective(ts)
    all_types = ts.rule_types()
    if not objective.constrained:
        raise DegenerateTrainingSet(
            "no observation constrains any hyperparameter")

    hp = HyperParams({k: 1.0 for k in all_types})
    hp.unconstrained = set(all_types) - objective.constrained
    if init is not None:
        for k, v in init.theta.items():
            if k in all_types:
                hp.theta[k] = min(max(v, eps), 1.0)
    else:
        for k in objective.constrained:
            hp.theta[k] = 0.5

    current = objective.value(hp)
    order = sorted(objective.constrained)
    for _ in range(max_cycles):
        cycle_start = current
        for k in order:
            f = objective.coordinate_function(k, hp)
            base = f(hp.theta[k])
            best = line_search(f, eps, 1.0)
            if f(best) > base:
                hp.theta[k] = best
                current += f(best) - base
        if current > NEG_INF and cycle_start > NEG_INF:
            if current - cycle_start < tol:
                break
        elif current == cycle_start:
            break
    return hp


def leave_one_out(training_sets: list, init: Optional[HyperParams] = None,
                  **opts) -> list:
    """Per program, learn from all the other programs' observations."""
    if len(training_sets) < 2:
        raise CorpusTooSmall("leave-one-out needs at least two programs")
    out = []
    for i in range(len(training_sets)):
        rest = [ts for j, ts in enumerate(training_sets) if j != i]
        out.append(learn(TrainingSet.merge(rest), init=init, **opts))
    return out
