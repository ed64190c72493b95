"""Likelihood of reachability observations under the random-subgraph model.

An observation records which projected facts were seeded (T) and which
were derived (R) in one analysis run.  The probability that a random
sub-hypergraph H of the blueprint reproduces a batch of observations
(reach(H, T_k) = R_k for all k) is bounded below and above by products
of per-head weighted model counts; an exponential enumeration oracle and
a loop-formula construction provide the exact value on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from . import hypergraph as hg
from .analysis import Abstraction, Analysis, derive, encode_params, local_provenance, project_set
from .errors import (ObservationOutOfRange, OracleLimitExceeded, ParseError,
                     SelfLoopArc)
from .hypergraph import Arc, Fact, Hypergraph
from .probmodel import NEG_INF, EXACT_ARC_LIMIT, HyperParams, ProbModel, _enumerate_subgraphs


@dataclass(frozen=True)
class Observation:
    """One training event: seeded facts t and derived facts r (projected)."""

    t: frozenset
    r: frozenset
    source_abstraction: Optional[Abstraction] = None

    def consistent(self) -> bool:
        return self.t <= self.r


def observe(an: Analysis, a: Abstraction) -> Observation:
    """Run the analysis under a and project the outcome."""
    g_a = local_provenance(an, a)
    p1 = encode_params(an, a, 1)
    t = project_set(an, p1)
    r = project_set(an, hg.reach(g_a, p1))
    return Observation(t=t, r=r, source_abstraction=a)


@dataclass
class PerHead:
    """Constraints for one derived fact h across observations."""

    candidates: frozenset  # A_h: arcs headed h that were never refuted
    obs_indices: tuple  # C_h
    lower_clauses: tuple  # per k in C_h: A_h ∩ F_k
    upper_clauses: tuple  # per k in C_h: A_h ∩ D_k


@dataclass
class BoundFormula:
    negated_arcs: frozenset  # N: arcs refuted by some observation
    per_head: dict  # Fact -> PerHead
    impossible: bool = False  # some observation had t ⊄ r


def bound_terms(g_bot: Hypergraph, obs: Iterable[Observation]) -> BoundFormula:
    obs = list(obs)
    for arc in g_bot.arcs:
        if arc.head in arc.body:
            raise SelfLoopArc(str(arc))
    for o in obs:
        if not o.r - o.t <= g_bot.vertices:
            raise ObservationOutOfRange(
                "observation derives facts foreign to the blueprint")
    if any(not o.consistent() for o in obs):
        return BoundFormula(frozenset(), {}, impossible=True)

    negated = set()
    for o in obs:
        for arc in g_bot.arcs:
            if arc.body <= o.r and arc.head not in o.r:
                negated.add(arc)

    by_head = {}
    for arc in g_bot.arcs:
        by_head.setdefault(arc.head, set()).add(arc)

    d_sets = [frozenset(a for a in g_bot.arcs if a.body <= o.r) for o in obs]
    f_sets = []
    for o, d_k in zip(obs, d_sets):
        dist = hg.distances(g_bot, o.t)
        f_sets.append(frozenset(
            a for a in d_k
            if all(dist[a.head] > dist[b] for b in a.body)))

    per_head = {}
    for h in sorted(by_head):
        c_h = tuple(k for k, o in enumerate(obs) if h in o.r - o.t)
        if not c_h:
            continue
        a_h = frozenset(by_head[h]) - negated
        per_head[h] = PerHead(
            candidates=a_h,
            obs_indices=c_h,
            lower_clauses=tuple(a_h & f_sets[k] for k in c_h),
            upper_clauses=tuple(a_h & d_sets[k] for k in c_h),
        )
    return BoundFormula(frozenset(negated), per_head)


def _wmc_clauses(clauses, theta: dict) -> float:
    """Weighted count of assignments satisfying a monotone CNF.

    Variables are arcs; each is true with its own probability, and
    variables outside every clause marginalize away.  Shannon expansion
    with memoization on the remaining clause set.
    """
    memo = {}

    def go(cls: frozenset) -> float:
        if not cls:
            return 1.0
        if frozenset() in cls:
            return 0.0
        if cls in memo:
            return memo[cls]
        var = min(min(c) for c in cls)
        on = frozenset(c for c in cls if var not in c)
        off = frozenset(
            (c - {var}) if var in c else c for c in cls)
        p = theta[var]
        result = p * go(on) + (1.0 - p) * go(off)
        memo[cls] = result
        return result

    return go(frozenset(frozenset(c) for c in clauses))


def _bound(bf: BoundFormula, hp: HyperParams, which: str) -> float:
    if bf.impossible:
        return NEG_INF
    total = 0.0
    for arc in bf.negated_arcs:
        lg = hp.log_one_minus(arc.rule_type)
        if lg == NEG_INF:
            return NEG_INF
        total += lg
    theta_cache = {}
    for h, ph in bf.per_head.items():
        clauses = ph.lower_clauses if which == "lower" else ph.upper_clauses
        for arc in ph.candidates:
            theta_cache[arc] = hp.get(arc.rule_type)
        value = _wmc_clauses(clauses, theta_cache)
        if value <= 0.0:
            return NEG_INF
        total += math.log(value)
    return total


def lower_bound(bf: BoundFormula, hp: HyperParams) -> float:
    return _bound(bf, hp, "lower")


def upper_bound(bf: BoundFormula, hp: HyperParams) -> float:
    return _bound(bf, hp, "upper")


def reduce_lower(bf: BoundFormula, cap: int = 8,
                 drop: Iterable[Arc] = None) -> BoundFormula:
    """Shrink the lower-bound formula by dropping clause variables.

    Per head, when more than `cap` distinct arcs occur in the clauses,
    only the `cap` smallest (canonical order) are kept; the rest vanish
    from every clause, which can only weaken the bound.  An explicit
    `drop` set forces particular arcs out instead.
    """
    if bf.impossible:
        return bf
    dropset = frozenset(drop or ())
    per_head = {}
    for h, ph in bf.per_head.items():
        used = sorted(set().union(*ph.lower_clauses) if ph.lower_clauses else ())
        if dropset:
            victims = dropset & set(used)
        elif len(used) > cap:
            victims = set(used[cap:])
        else:
            victims = set()
        if victims:
            clauses = tuple(frozenset(c - victims) for c in ph.lower_clauses)
        else:
            clauses = ph.lower_clauses
        per_head[h] = PerHead(ph.candidates, ph.obs_indices, clauses,
                              ph.upper_clauses)
    return BoundFormula(bf.negated_arcs, per_head)


def reduce_upper(bf: BoundFormula) -> BoundFormula:
    """Keep only the longest upper clause per head (ties: canonical order)."""
    if bf.impossible:
        return bf
    per_head = {}
    for h, ph in bf.per_head.items():
        if ph.upper_clauses:
            # longest clause wins; ties go to the canonically smallest
            best = sorted(ph.upper_clauses,
                          key=lambda c: (-len(c), sorted(c)))[0]
            clauses = (best,)
        else:
            clauses = ()
        per_head[h] = PerHead(ph.candidates, ph.obs_indices,
                              ph.lower_clauses, clauses)
    return BoundFormula(bf.negated_arcs, per_head)


def exact_likelihood(g_bot: Hypergraph, obs: Iterable[Observation],
                     hp: HyperParams, limit: int = EXACT_ARC_LIMIT) -> float:
    """Log-probability by enumerating every sub-hypergraph."""
    obs = list(obs)
    if any(not o.consistent() for o in obs):
        return NEG_INF
    if len(g_bot) > limit:
        raise OracleLimitExceeded(
            f"exact likelihood over {len(g_bot)} arcs (limit {limit})")
    model = ProbModel(g_bot, hp)
    total = 0.0
    for chosen, p in _enumerate_subgraphs(model):
        sub = Hypergraph(chosen)
        if all(hg.reach(sub, o.t) == o.r for o in obs):
            total += p
    return math.log(total) if total > 0.0 else NEG_INF


# ---------------------------------------------------------------------------
# loop formulas: the exact characterization of reach(H, T) = R


@dataclass(frozen=True)
class LoopFormula:
    """[t ⊆ r] ∧ (refuted arcs off) ∧ (every loop inside r∖t justified)."""

    consistent: bool
    negated_arcs: frozenset
    clauses: tuple  # each a frozenset of arcs; at least one must be selected

    def evaluate(self, selected: Iterable[Arc]) -> bool:
        sel = frozenset(selected)
        if not self.consistent:
            return False
        if sel & self.negated_arcs:
            return False
        return all(sel & c for c in self.clauses)


def loop_formula(g_bot: Hypergraph, t: Iterable[Fact], r: Iterable[Fact],
                 loop_limit: int = 16) -> LoopFormula:
    ts = frozenset(t)
    rs = frozenset(r)
    if not ts <= rs:
        return LoopFormula(False, frozenset(), ())
    negated = frozenset(
        a for a in g_bot.arcs if a.body <= rs and a.head not in rs)
    interior = rs - ts
    interior_verts = sorted(v for v in interior if v in g_bot.vertices)
    if len(interior_verts) > loop_limit:
        raise OracleLimitExceeded(
            f"loop enumeration over {len(interior_verts)} vertices")
    edges = hg.dependency_graph(g_bot)
    clauses = []
    n = len(interior_verts)
    for mask in range(1, 1 << n):
        loop = frozenset(interior_verts[i] for i in range(n) if mask >> i & 1)
        if not hg._strongly_connected(loop, edges):
            continue
        just = frozenset(
            a for a in hg.justifications(g_bot, loop)
            if a.body <= rs and a not in negated)
        clauses.append(just)
    # facts of r∖t that are not vertices can never be derived
    consistent = all(v in g_bot.vertices for v in interior)
    return LoopFormula(consistent, negated, tuple(sorted(clauses, key=sorted)))


def loop_formula_wmc(g_bot: Hypergraph, formulas: Iterable[LoopFormula],
                     hp: HyperParams, limit: int = EXACT_ARC_LIMIT) -> float:
    """Log of the weighted model count of a conjunction of loop formulas."""
    formulas = list(formulas)
    if len(g_bot) > limit:
        raise OracleLimitExceeded(
            f"weighted model count over {len(g_bot)} arcs (limit {limit})")
    model = ProbModel(g_bot, hp)
    total = 0.0
    for chosen, p in _enumerate_subgraphs(model):
        sel = frozenset(chosen)
        if all(f.evaluate(sel) for f in formulas):
            total += p
    return math.log(total) if total > 0.0 else NEG_INF


# ---------------------------------------------------------------------------
# observation text format


def serialize_observations(obs: Iterable[Observation]) -> str:
    lines = []
    for o in obs:
        lines.append("obs\n")
        lines.append("T: " + " ".join(str(f) for f in sorted(o.t)) + "\n")
        lines.append("R: " + " ".join(str(f) for f in sorted(o.r)) + "\n")
    return "".join(lines)


def parse_observations(text: str) -> list:
    out = []
    cur_t = None
    cur_r = None
    state = None

    def flush(lineno):
        nonlocal cur_t, cur_r
        if cur_t is None and cur_r is None:
            return
        if cur_t is None or cur_r is None:
            raise ParseError(lineno, "observation missing T: or R: line")
        out.append(Observation(t=frozenset(cur_t), r=frozenset(cur_r)))
        cur_t = cur_r = None

    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "obs":
            flush(lineno)
            state = "obs"
        elif line.startswith("T:"):
            cur_t = [hg.parse_fact(tok) for tok in line[2:].split()]
        elif line.startswith("R:"):
            cur_r = [hg.parse_fact(tok) for tok in line[2:].split()]
        else:
            raise ParseError(lineno, f"unexpected line {raw!r}")
    flush(lineno + 1)
    return out
