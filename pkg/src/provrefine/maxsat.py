"""MaxSAT over arbitrary boolean formulas with per-variable real weights.

The task: among models of a hard formula, maximize the summed weight of
the true variables.  The hard formula is compiled to CNF by the Tseytin
transformation; auxiliary and existentially quantified variables carry
weight zero and are hidden from reported models.  Includes a deterministic
branch-and-bound exact solver, a local-search approximate solver, and a
DIMACS WCNF bridge for external solvers.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import BudgetExceeded, NotAModel, WeightOverflow

# ---------------------------------------------------------------------------
# formulas

TRUE = ("const", True)
FALSE = ("const", False)


def var(name: str):
    return ("var", name)


def not_(f):
    return ("not", f)


def and_(*fs):
    return ("and", tuple(fs))


def or_(*fs):
    return ("or", tuple(fs))


def implies(a, b):
    return ("implies", a, b)


def iff(a, b):
    return ("iff", a, b)


def exists(names: Iterable[str], f):
    return ("exists", frozenset(names), f)


def formula_vars(f) -> set:
    kind = f[0]
    if kind == "var":
        return {f[1]}
    if kind == "const":
        return set()
    if kind == "not":
        return formula_vars(f[1])
    if kind in ("and", "or"):
        out = set()
        for g in f[1]:
            out |= formula_vars(g)
        return out
    if kind in ("implies", "iff"):
        return formula_vars(f[1]) | formula_vars(f[2])
    if kind == "exists":
        return formula_vars(f[2]) - f[1]
    raise ValueError(f"unknown formula node {kind!r}")


@dataclass
class MaxSatInstance:
    hard: object  # BoolFormula tree
    weights: dict = field(default_factory=dict)

    def objective(self, model: Iterable[str]) -> float:
        return sum(self.weights.get(v, 0.0) for v in model)


# ---------------------------------------------------------------------------
# Tseytin compilation


class _CNF:
    """Clause database with a name <-> id map; ids for auxiliaries too."""

    def __init__(self):
        self.ids = {}  # name -> positive int
        self.names = {}
        self.hidden = set()  # ids not reported in models (aux + exists)
        self.clauses = []

    def new_var(self, name: Optional[str] = None, hidden: bool = False) -> int:
        i = len(self.ids) + 1
        if name is None:
            name = f"_aux{i}"
            hidden = True
        self.ids[name] = i
        self.names[i] = name
        if hidden:
            self.hidden.add(i)
        return i

    def lookup(self, name: str, hidden: bool = False) -> int:
        if name not in self.ids:
            self.new_var(name, hidden)
        return self.ids[name]

    def add(self, *lits: int) -> None:
        self.clauses.append(tuple(lits))


def _tseytin(f, cnf: _CNF, hidden_names: frozenset) -> int:
    """Return a literal equivalent to f, adding definitional clauses."""
    kind = f[0]
    if kind == "const":
        lit = cnf.new_var()
        cnf.add(lit if f[1] else -lit)
        return lit
    if kind == "var":
        return cnf.lookup(f[1], hidden=f[1] in hidden_names)
    if kind == "not":
        return -_tseytin(f[1], cnf, hidden_names)
    if kind == "and" or kind == "or":
        lits = [_tseytin(g, cnf, hidden_names) for g in f[1]]
        out = cnf.new_var()
        if kind == "and":
            for l in lits:
                cnf.add(-out, l)
            cnf.add(out, *[-l for l in lits])
        else:
            for l in lits:
                cnf.add(-l, out)
            cnf.add(-out, *lits)
        return out
    if kind == "implies":
        a = _tseytin(f[1], cnf, hidden_names)
        b = _tseytin(f[2], cnf, hidden_names)
        out = cnf.new_var()
        cnf.add(-out, -a, b)
        cnf.add(out, a)
        cnf.add(out, -b)
        return out
    if kind == "iff":
        a = _tseytin(f[1], cnf, hidden_names)
        b = _tseytin(f[2], cnf, hidden_names)
        out = cnf.new_var()
        cnf.add(-out, -a, b)
        cnf.add(-out, a, -b)
        cnf.add(out, a, b)
        cnf.add(out, -a, -b)
        return out
    if kind == "exists":
        return _tseytin(f[2], cnf, hidden_names | f[1])
    raise ValueError(f"unknown formula node {kind!r}")


def compile_instance(inst: MaxSatInstance) -> _CNF:
    cnf = _CNF()
    # intern the weighted variables first so ids follow canonical name order
    for name in sorted(set(inst.weights) | formula_vars(inst.hard)):
        cnf.lookup(name)
    root = _tseytin(inst.hard, cnf, frozenset())
    cnf.add(root)
    return cnf


# ---------------------------------------------------------------------------
# propagation and search primitives


def _propagate(clauses, assign: dict):
    """Unit propagation; returns False on conflict, else True.

    `assign` maps var id -> bool and is extended in place.
    """
    changed = True
    while changed:
        changed = False
        for clause in clauses:
            unassigned = None
            satisfied = False
            count = 0
            for lit in clause:
                v = abs(lit)
                want = lit > 0
                if v in assign:
                    if assign[v] == want:
                        satisfied = True
                        break
                else:
                    unassigned = lit
                    count += 1
            if satisfied:
                continue
            if count == 0:
                return False
            if count == 1:
                v = abs(unassigned)
                assign[v] = unassigned > 0
                changed = True
    return True


def _dpll_complete(clauses, assign: dict, order: list,
                   deadline: float) -> Optional[dict]:
    """Deterministic satisfiability search; branches False first."""
    assign = dict(assign)
    if not _propagate(clauses, assign):
        return None
    for v in order:
        if v not in assign:
            if time.monotonic() > deadline:
                raise BudgetExceeded("satisfiability completion timed out")
            for value in (False, True):
                trial = dict(assign)
                trial[v] = value
                result = _dpll_complete(clauses, trial, order, deadline)
                if result is not None:
                    return result
            return None
    return assign


def _check_assignment(clauses, assign: dict) -> bool:
    return all(
        any(assign.get(abs(l), False) == (l > 0) for l in clause)
        for clause in clauses)


# ---------------------------------------------------------------------------
# exact solver


def _weighted_set_key(cnf: _CNF, model_ids: set, weighted: list) -> tuple:
    """Canonical ranking of a model's weighted part: set-lex order.

    Models are compared by the sorted tuple of indices (into the
    canonical weighted-variable order) of their true weighted variables;
    tuple comparison makes a model containing earlier variables smaller.
    """
    index = {v: i for i, v in enumerate(sorted(weighted, key=lambda v: cnf.names[v]))}
    return tuple(sorted(index[v] for v in model_ids if v in index))


def solve_exact(inst: MaxSatInstance, budget: float = 60.0):
    """Optimal model of the hard formula, or None when unsatisfiable.

    Deterministic branch and bound: branches on weighted variables by
    descending |weight| (names break ties), prunes on an optimistic
    bound, and among optimal models returns the one whose weighted part
    is smallest in set-lex order, completed by a False-first search over
    the remaining variables.
    """
    deadline = time.monotonic() + budget
    cnf = compile_instance(inst)
    clauses = cnf.clauses
    weights = {cnf.ids[n]: w for n, w in inst.weights.items()
               if n in cnf.ids and w != 0.0}
    weighted = sorted(weights, key=lambda v: (-abs(weights[v]), cnf.names[v]))
    others = sorted(v for v in cnf.names if v not in weights)
    tol = 1e-12

    best = {"objective": None, "key": None, "assign": None}

    def record(assign: dict, objective: float) -> None:
        model_ids = {v for v, val in assign.items() if val}
        key = _weighted_set_key(cnf, model_ids, weighted)
        if (best["objective"] is None
                or objective > best["objective"] + tol
                or (abs(objective - best["objective"]) <= tol
                    and key < best["key"])):
            best["objective"] = objective
            best["key"] = key
            best["assign"] = assign

    def search(assign: dict) -> None:
        if time.monotonic() > deadline:
            raise BudgetExceeded("exact solver timed out")
        assign = dict(assign)
        if not _propagate(clauses, assign):
            return
        objective = sum(w for v, w in weights.items() if assign.get(v, False))
        slack = sum(max(0.0, w) for v, w in weights.items() if v not in assign)
        if best["objective"] is not None and objective + slack < best["objective"] - tol:
            return
        pending = [v for v in weighted if v not in assign]
        if not pending:
            if best["objective"] is not None:
                if objective < best["objective"] - tol:
                    return
                if abs(objective - best["objective"]) <= tol:
                    model_ids = {v for v in weights if assign.get(v, False)}
                    if _weighted_set_key(cnf, model_ids, weighted) >= best["key"]:
                        return
            completion = _dpll_complete(clauses, assign, others, deadline)
            if completion is not None:
                for v in cnf.names:
                    completion.setdefault(v, False)
                record(completion, objective)
            return
        v = pending[0]
        first = weights[v] > 0
        for value in (first, not first):
            trial = dict(assign)
            trial[v] = value
            search(trial)

    search({})
    if best["assign"] is None:
        return None
    model = frozenset(
        cnf.names[v] for v, val in best["assign"].items()
        if val and v not in cnf.hidden)
    return model, inst.objective(model)


# ---------------------------------------------------------------------------
# approximate solver


def solve_approx(inst: MaxSatInstance, budget: float = 60.0,
                 rng: Optional[random.Random] = None):
    """Feasibility-first local search; always returns a genuine model.

    Unit propagation proves easy unsatisfiability; otherwise a WalkSAT
    loop finds some model and hill climbing with restarts improves the
    objective.  Deterministic given the rng seed.
    """
    rng = rng or random.Random(0)
    deadline = time.monotonic() + budget
    cnf = compile_instance(inst)
    clauses = cnf.clauses
    weights = {cnf.ids[n]: w for n, w in inst.weights.items()
               if n in cnf.ids and w != 0.0}
    all_vars = sorted(cnf.names)

    roots = {}
    if not _propagate(clauses, roots):
        return None

    def walk(assign: dict, frozen: dict, max_flips: int) -> Optional[dict]:
        """WalkSAT from a starting point; frozen vars are never flipped."""
        assign = dict(assign)
        assign.update(frozen)
        for _ in range(max_flips):
            if time.monotonic() > deadline:
                raise BudgetExceeded("approximate solver timed out")
            unsat = [c for c in clauses
                     if not any(assign[abs(l)] == (l > 0) for l in c)]
            if not unsat:
                return assign
            clause = unsat[rng.randrange(len(unsat))]
            flippable = [abs(l) for l in clause if abs(l) not in frozen]
            if not flippable:
                return None
            if rng.random() < 0.3:
                v = flippable[rng.randrange(len(flippable))]
            else:
                # greedy: flip the variable breaking the fewest clauses
                def broken(v):
                    assign[v] = not assign[v]
                    n = sum(1 for c in clauses
                            if not any(assign[abs(l)] == (l > 0) for l in c))
                    assign[v] = not assign[v]
                    return n
                v = min(flippable, key=lambda u: (broken(u), u))
            assign[v] = not assign[v]
        return None

    def objective_of(assign: dict) -> float:
        return sum(w for v, w in weights.items() if assign[v])

    best = None
    # a deterministic completion guarantees feasibility on instances where
    # random walks rarely stumble onto a model (long implication chains)
    try:
        seeded = _dpll_complete(clauses, dict(roots), all_vars, deadline)
        if seeded is None:
            return None  # the completion search is exhaustive: unsatisfiable
    except BudgetExceeded:
        seeded = None
    for restart in range(20):
        if time.monotonic() > deadline:
            break
        if restart == 0 and seeded is not None:
            model = dict(seeded)
        else:
            start = {v: rng.random() < 0.5 for v in all_vars}
            # bias the start toward the objective
            for v, w in weights.items():
                start[v] = w > 0
            if restart:
                for v in all_vars:
                    if rng.random() < 0.25:
                        start[v] = not start[v]
            model = walk(start, dict(roots), 400)
        if model is None:
            continue
        # hill climb: try to flip weighted variables toward their sign
        improved = True
        while improved and time.monotonic() < deadline:
            improved = False
            for v in sorted(weights, key=lambda u: -abs(weights[u])):
                want = weights[v] > 0
                if model[v] == want:
                    continue
                frozen = dict(roots)
                frozen[v] = want
                fixed = walk(model, frozen, 200)
                if fixed is not None and objective_of(fixed) > objective_of(model):
                    model = fixed
                    improved = True
        if best is None or objective_of(model) > objective_of(best):
            best = model
            stall = 0
        else:
            stall += 1
            if stall >= 3:
                break
        if all(model[v] == (w > 0) for v, w in weights.items()):
            break
    if best is None:
        raise BudgetExceeded("no model found within budget")
    out = frozenset(cnf.names[v] for v in all_vars
                    if best[v] and v not in cnf.hidden)
    if not _check_assignment(clauses, best):
        raise NotAModel("local search produced a non-model")
    return out, inst.objective(out)


# ---------------------------------------------------------------------------
# WCNF bridge

WEIGHT_SCALE = 10 ** 6


def to_wcnf(inst: MaxSatInstance):
    """DIMACS WCNF text plus the variable map for decoding."""
    cnf = compile_instance(inst)
    softs = []
    for name in sorted(inst.weights):
        w = inst.weights[name]
        if w == 0.0 or name not in cnf.ids:
            continue
        scaled = round(abs(w) * WEIGHT_SCALE)
        if scaled > 2 ** 62:
            raise WeightOverflow(f"weight {w} too large for integral encoding")
        if scaled == 0:
            continue
        lit = cnf.ids[name] if w > 0 else -cnf.ids[name]
        softs.append((scaled, lit))
    top = sum(s for s, _ in softs) + 1
    lines = [f"p wcnf {len(cnf.names)} {len(cnf.clauses) + len(softs)} {top}\n"]
    for clause in cnf.clauses:
        lines.append(f"{top} " + " ".join(str(l) for l in clause) + " 0\n")
    for scaled, lit in softs:
        lines.append(f"{scaled} {lit} 0\n")
    varmap = dict(cnf.ids)
    return "".join(lines), varmap


def serialize_varmap(varmap: dict) -> str:
    return "".join(f"{i} {name}\n" for name, i in sorted(
        varmap.items(), key=lambda kv: kv[1]))


def parse_varmap(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        i, name = line.split(None, 1)
        out[name] = int(i)
    return out


def decode_external_model(inst: MaxSatInstance, varmap: dict, text: str):
    """Parse an external solver's literal list; returns (model, objective)."""
    by_id = {i: name for name, i in varmap.items()}
    cnf = compile_instance(inst)
    assign = {}
    for tok in text.split():
        if tok in ("v", "s", "o") or not tok.lstrip("-").isdigit():
            continue
        lit = int(tok)
        if lit == 0:
            continue
        assign[abs(lit)] = lit > 0
    if not _check_assignment(cnf.clauses, assign):
        raise NotAModel("external assignment violates the hard constraint")
    model = frozenset(
        by_id[i] for i, val in assign.items()
        if val and i in by_id and i not in cnf.hidden)
    return model, inst.objective(model)
