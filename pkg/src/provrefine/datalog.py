"""Minimal Datalog frontend with arithmetic guards and provenance output.

Rules are Horn clauses over relational atoms plus integer guards; guards
are evaluated during grounding and never appear in the emitted arcs.
Grounding is semi-naive and deterministic, and records one arc per fired
rule instance, tagged with the rule name.  Base facts become empty-body
arcs (type "base") so that hypergraph reachability from the parameter
facts alone recovers the whole derivation.

Also home of the dirt-propagation demo analysis (`smudge_fixture`): a
tiny imperative program where `smudgeK(x, y)` passes x's dirt to y when
(x.value + y.value) mod K == 0, analysed either cheaply (guard dropped)
or precisely (values tracked), one boolean parameter per smudge site.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .analysis import Analysis, Projection
from .errors import DomainOverflow, ParseError
from .hypergraph import Arc, Fact, Hypergraph

BASE_RULE_TYPE = "base"
DEFAULT_DOMAIN = (0, 255)


def _is_var(token: str) -> bool:
    return token[:1].isupper()


@dataclass(frozen=True)
class Atom:
    """A possibly non-ground atom; uppercase-initial args are variables."""

    relation: str
    args: tuple = ()

    def variables(self) -> set:
        return {a for a in self.args if isinstance(a, str) and _is_var(a)}

    def __str__(self) -> str:
        if not self.args:
            return self.relation
        return "%s(%s)" % (self.relation, ",".join(str(a) for a in self.args))


class Guard:
    """One arithmetic constraint over bound integer variables.

    Comparison of two integer terms built from +, *, mod.  An equality
    whose left side is a single unbound variable acts as a binding
    (assignment-style) guard instead of a test.
    """

    _ALLOWED_OPS = {ast.Add: "+", ast.Mult: "*", ast.Mod: "mod"}
    _ALLOWED_CMP = {ast.Eq: "==", ast.NotEq: "!=", ast.Lt: "<", ast.Gt: ">"}

    def __init__(self, text: str):
        self.text = text.strip()
        pytext = re.sub(r"\bmod\b", "%", self.text)
        try:
            tree = ast.parse(pytext, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"malformed guard {self.text!r}: {exc.msg}") from exc
        node = tree.body
        if not (isinstance(node, ast.Compare) and len(node.ops) == 1):
            raise ValueError(f"guard must be a single comparison: {self.text!r}")
        self.op = self._ALLOWED_CMP.get(type(node.ops[0]))
        if self.op is None:
            raise ValueError(f"unsupported comparison in guard {self.text!r}")
        self.lhs = node.left
        self.rhs = node.comparators[0]
        for side in (self.lhs, self.rhs):
            self._validate(side)
        self.binds: Optional[str] = None
        if self.op == "==" and isinstance(self.lhs, ast.Name) and _is_var(self.lhs.id):
            self.binds = self.lhs.id

    def _validate(self, node) -> None:
        if isinstance(node, ast.BinOp):
            if type(node.op) not in self._ALLOWED_OPS:
                raise ValueError(f"unsupported operator in guard {self.text!r}")
            self._validate(node.left)
            self._validate(node.right)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, int):
                raise ValueError(f"non-integer constant in guard {self.text!r}")
        elif not isinstance(node, ast.Name):
            raise ValueError(f"unsupported term in guard {self.text!r}")

    def variables(self) -> set:
        out = set()
        for side in (self.lhs, self.rhs):
            out.update(n.id for n in ast.walk(side) if isinstance(n, ast.Name))
        return out

    def _eval(self, node, env: dict) -> int:
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return env[node.id]
        left = self._eval(node.left, env)
        right = self._eval(node.right, env)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Mult):
            return left * right
        return left % right

    def check(self, env: dict):
        """Evaluate under env.

        Returns (holds, binding) where binding is (var, value) when this
        is a binding guard introducing a fresh variable, else None.
        """
        if self.binds is not None and self.binds not in env:
            return True, (self.binds, self._eval(self.rhs, env))
        left = self._eval(self.lhs, env)
        right = self._eval(self.rhs, env)
        holds = {
            "==": left == right,
            "!=": left != right,
            "<": left < right,
            ">": left > right,
        }[self.op]
        return holds, None

    def __str__(self) -> str:
        return self.text


@dataclass
class Rule:
    name: str
    head: Atom
    body_atoms: list
    guards: list = field(default_factory=list)

    def validate(self) -> None:
        bound = set()
        for atom in self.body_atoms:
            bound |= atom.variables()
        for g in self.guards:
            gvars = g.variables()
            if g.binds is not None and g.binds not in bound:
                unbound = gvars - bound - {g.binds}
                if unbound:
                    raise ValueError(
                        f"guard {g} uses unbound variables {sorted(unbound)}")
                bound.add(g.binds)
            else:
                unbound = gvars - bound
                if unbound:
                    raise ValueError(
                        f"guard {g} uses unbound variables {sorted(unbound)}")
        free = self.head.variables() - bound
        if free:
            raise ValueError(
                f"head variables {sorted(free)} not bound in rule {self.name}")

    def __str__(self) -> str:
        body = ", ".join([str(a) for a in self.body_atoms] + [str(g) for g in self.guards])
        return f"{self.head} :- {body}. @{self.name}"


@dataclass(frozen=True)
class RuleInstance:
    """A rule grounded by a substitution whose guards all hold."""

    rule_name: str
    head: Fact
    body: frozenset  # the ground relational body atoms


# ---------------------------------------------------------------------------
# parsing

_ATOM_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_']*)(?:\(([^()]*)\))?$")


def _parse_term(tok: str):
    tok = tok.strip()
    if re.fullmatch(r"-?\d+", tok):
        return int(tok)
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_']*", tok):
        return tok
    raise ValueError(f"malformed term {tok!r}")


def _parse_atom(text: str) -> Atom:
    m = _ATOM_RE.match(text.strip())
    if not m:
        raise ValueError(f"malformed atom {text!r}")
    rel, argtext = m.groups()
    if argtext is None:
        return Atom(rel)
    args = tuple(_parse_term(t) for t in argtext.split(",")) if argtext else ()
    return Atom(rel, args)


def _split_body(text: str) -> list:
    """Split a rule body on commas not nested inside parentheses."""
    parts = []
    depth = 0
    cur = []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_statement(line: str):
    """One statement: either a rule `head :- body. @name` or a fact `f.`"""
    name = None
    if "@" in line:
        line, name = line.rsplit("@", 1)
        name = name.strip()
        if not name:
            raise ValueError("empty rule name after '@'")
    line = line.strip()
    if not line.endswith("."):
        raise ValueError("statement must end with '.'")
    line = line[:-1].strip()
    if ":-" not in line:
        if name is not None:
            raise ValueError("facts may not carry a rule name")
        atom = _parse_atom(line)
        if atom.variables():
            raise ValueError(f"fact {atom} contains variables")
        return Fact(atom.relation, atom.args)
    if name is None:
        raise ValueError("rule missing '@name' annotation")
    head_text, body_text = line.split(":-", 1)
    head = _parse_atom(head_text)
    atoms = []
    guards = []
    for part in _split_body(body_text):
        if _ATOM_RE.match(part):
            atoms.append(_parse_atom(part))
        else:
            guards.append(Guard(part))
    rule = Rule(name, head, atoms, guards)
    rule.validate()
    return rule


def parse_program(text: str):
    """Parse rules and extensional facts; returns (rules, base_facts)."""
    rules = []
    base = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            stmt = _parse_statement(line)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from exc
        if isinstance(stmt, Rule):
            rules.append(stmt)
        else:
            base.add(stmt)
    return rules, base


# ---------------------------------------------------------------------------
# grounding


def _match_atom(atom: Atom, fact: Fact, env: dict) -> Optional[dict]:
    if atom.relation != fact.relation or len(atom.args) != len(fact.args):
        return None
    env = dict(env)
    for pat, val in zip(atom.args, fact.args):
        if isinstance(pat, str) and _is_var(pat):
            if pat in env:
                if env[pat] != val:
                    return None
            else:
                env[pat] = val
        elif pat != val:
            return None
    return env


def _ground_atom(atom: Atom, env: dict) -> Fact:
    return Fact(atom.relation, tuple(
        env[a] if isinstance(a, str) and _is_var(a) else a for a in atom.args))


def _check_domain(fact: Fact, bounds) -> None:
    lo, hi = bounds
    for a in fact.args:
        if isinstance(a, int) and not lo <= a <= hi:
            raise DomainOverflow(f"{fact}: integer {a} outside [{lo}, {hi}]")


def ground(rules: Iterable[Rule], base: Iterable[Fact],
           domain_bounds=DEFAULT_DOMAIN, seeds: Iterable[Fact] = ()) -> Hypergraph:
    """Semi-naive bottom-up evaluation into a provenance hypergraph.

    Base facts are emitted as empty-body arcs; `seeds` are available to
    rule bodies but get no arc of their own (they are supplied at query
    time, e.g. as parameter encodings).
    """
    rules = list(rules)
    base = frozenset(base)
    seeds = frozenset(seeds)
    for f in base | seeds:
        _check_domain(f, domain_bounds)

    known = set(base) | set(seeds)
    by_rel = {}
    for f in known:
        by_rel.setdefault(f.relation, set()).add(f)

    arcs = {Arc(f, frozenset(), BASE_RULE_TYPE) for f in sorted(base)}

    def join(rule: Rule, delta: set):
        """All instances of `rule` with at least one body atom in delta."""
        n = len(rule.body_atoms)
        for pivot in range(n):
            atom = rule.body_atoms[pivot]
            for df in delta & by_rel.get(atom.relation, set()):
                env0 = _match_atom(atom, df, {})
                if env0 is None:
                    continue
                # join the remaining atoms left to right
                stack = [(0, env0, [None] * n)]
                while stack:
                    i, env, picked = stack.pop()
                    if i == n:
                        yield rule, env, picked
                        continue
                    if i == pivot:
                        nxt = picked[:]
                        nxt[pivot] = df
                        stack.append((i + 1, env, nxt))
                        continue
                    a = rule.body_atoms[i]
                    for f in by_rel.get(a.relation, ()):
                        env2 = _match_atom(a, f, env)
                        if env2 is not None:
                            nxt = picked[:]
                            nxt[i] = f
                            stack.append((i + 1, env2, nxt))

    delta = set(known)
    while delta:
        new_facts = set()
        for rule in rules:
            for _, env, picked in join(rule, delta):
                ok = True
                env = dict(env)
                for g in rule.guards:
                    holds, binding = g.check(env)
                    if binding is not None:
                        env[binding[0]] = binding[1]
                    if not holds:
                        ok = False
                        break
                if not ok:
                    continue
                head = _ground_atom(rule.head, env)
                _check_domain(head, domain_bounds)
                arc = Arc(head, frozenset(picked), rule.name)
                if arc not in arcs:
                    arcs.add(arc)
                    if head not in known:
                        new_facts.add(head)
        known |= new_facts
        for f in new_facts:
            by_rel.setdefault(f.relation, set()).add(f)
        delta = new_facts
    return Hypergraph(arcs)


# ---------------------------------------------------------------------------
# the dirt-propagation fixture

SMUDGE_RULES_TEXT = """
# dirt propagation through smudge sites, approximate semantics
dirty(L2,B) :- cheap(L), dirty(L,A), flow(L,L2), smudge2(L,A,B). @cheap_smudge2
dirty(L2,B) :- cheap(L), dirty(L,A), flow(L,L2), smudge3(L,A,B). @cheap_smudge3
dirty(L2,B) :- cheap(L), dirty(L,A), flow(L,L2), smudge5(L,A,B). @cheap_smudge5
dirty(L2,B) :- cheap(L), dirty(L,A), flow(L,L2), smudge7(L,A,B). @cheap_smudge7

# precise semantics: dirt moves only when the value sum hits the modulus
dirty(L2,B) :- precise(L), dirty(L,A), flow(L,L2), smudge2(L,A,B), value(L,A,VA), value(L,B,VB), (VA + VB) mod 2 == 0. @precise_smudge2
dirty(L2,B) :- precise(L), dirty(L,A), flow(L,L2), smudge3(L,A,B), value(L,A,VA), value(L,B,VB), (VA + VB) mod 3 == 0. @precise_smudge3
dirty(L2,B) :- precise(L), dirty(L,A), flow(L,L2), smudge5(L,A,B), value(L,A,VA), value(L,B,VB), (VA + VB) mod 5 == 0. @precise_smudge5
dirty(L2,B) :- precise(L), dirty(L,A), flow(L,L2), smudge7(L,A,B), value(L,A,VA), value(L,B,VB), (VA + VB) mod 7 == 0. @precise_smudge7

# once dirty, always dirty
dirty(L2,A) :- dirty(L,A), flow(L,L2). @dirty_persist

# value tracking: keep(L,A) marks objects the command at L leaves alone
value(L2,A,N) :- value(L,A,N), keep(L,A), flow(L,L2). @value_persist
"""


def _smudge_value_rules(assignments) -> str:
    """One rule per assignment command, keyed by an assign_* base relation.

    assignments: list of (rule_name, marker_relation, head_atom, extra_body)
    """
    lines = []
    for name, marker, head, extra in assignments:
        body = [f"{marker}(L)", "flow(L,L2)"] + extra
        lines.append(f"{head} :- {', '.join(body)}. @{name}")
    return "\n".join(lines) + "\n"


_SMUDGE_ASSIGNMENTS = [
    # x.value := 10
    ("assign_x_const", "assign_ten", "value(L2,x,10)", []),
    # y.value := y.value + 2 * x.value
    ("assign_y_lin", "assign_ylin",
     "value(L2,y,N2)", ["value(L,y,B)", "value(L,x,A)", "N2 == B + 2 * A"]),
    # if z.dirty && y.value > 5 then v.value := x.value + y.value
    ("assign_v_guarded", "assign_vsum",
     "value(L2,v,N2)",
     ["dirty(L,z)", "value(L,y,B)", "B > 5", "value(L,x,A)", "N2 == A + B"]),
]


def smudge_program_text(smudges=None, init_values=None, source="x",
                        assignments=None) -> str:
    """Full rule+fact text for a smudge program.

    smudges: list of (label:int, k:int, src_obj, dst_obj); defaults to the
    five-site demo program.  init_values: object -> initial value.
    """
    if smudges is None:
        smudges = [(0, 2, "x", "y"), (1, 3, "y", "z"), (2, 3, "z", "v"),
                   (3, 5, "x", "y"), (4, 7, "y", "v")]
    objects = sorted({o for _, _, a, b in smudges for o in (a, b)} | {source})
    if init_values is None:
        init_values = {}
    if assignments is None:
        assignments = _SMUDGE_ASSIGNMENTS

    # control flow: an init point, one point per smudge label, an end point
    if assignments is _SMUDGE_ASSIGNMENTS:
        # the demo program interleaves its assignments with the smudges
        points = ["s0", 0, "l0p", 1, "g1", 2, 3, 4, "end"]
        assigned_at = {"s0": {"x"}, "l0p": {"y"}, "g1": set()}
        markers = [("assign_ten", "s0"), ("assign_ylin", "l0p"),
                   ("assign_vsum", "g1")]
    else:
        points = ["s0"] + [lbl for lbl, _, _, _ in smudges] + ["end"]
        assigned_at = {}
        markers = []

    lines = [SMUDGE_RULES_TEXT, _smudge_value_rules(assignments)]
    for a, b in zip(points, points[1:]):
        lines.append(f"flow({a},{b}).")
    for lbl, k, a, b in smudges:
        lines.append(f"smudge{k}({lbl},{a},{b}).")
    for marker, point in markers:
        lines.append(f"{marker}({point}).")
    lines.append(f"dirty(s0,{source}).")
    for obj in objects:
        lines.append(f"value(s0,{obj},{init_values.get(obj, 0)}).")
    # non-assigned objects keep their value across every non-final point
    for point in points[:-1]:
        for obj in objects:
            if obj not in assigned_at.get(point, set()):
                lines.append(f"keep({point},{obj}).")
    return "\n".join(lines) + "\n"


def smudge_labels(smudges=None) -> list:
    if smudges is None:
        return [0, 1, 2, 3, 4]
    return [lbl for lbl, _, _, _ in smudges]


def smudge_analysis(smudges=None, init_values=None, source="x",
                    query=None) -> Analysis:
    """Build the parametric analysis for a smudge program."""
    text = smudge_program_text(smudges, init_values, source,
                               assignments=None if smudges is None else [])
    rules, base = parse_program(text)
    labels = smudge_labels(smudges)
    seeds = {Fact("cheap", (l,)) for l in labels}
    seeds |= {Fact("precise", (l,)) for l in labels}
    graph = ground(rules, base, seeds=seeds)
    if query is None:
        if smudges is None:
            query = Fact("dirty", ("end", "v"))
        else:
            query = Fact("dirty", ("end", smudges[-1][3]))
    return Analysis(
        global_graph=graph,
        queries=frozenset([query]),
        params=tuple(str(l) for l in labels),
        encode0={str(l): Fact("cheap", (l,)) for l in labels},
        encode1={str(l): Fact("precise", (l,)) for l in labels},
        projection=Projection({"precise": ("cheap", (0,))}),
    )


def smudge_fixture() -> Analysis:
    """The five-site demo analysis: query `dirty(end, v)`, params "0".."4"."""
    return smudge_analysis()


def smudge_theta() -> dict:
    """The intuitive hyperparameters: 1/K per cheap smudge rule, else 1."""
    theta = {}
    for k in (2, 3, 5, 7):
        theta[f"cheap_smudge{k}"] = 1.0 / k
        theta[f"precise_smudge{k}"] = 1.0
    for name in (BASE_RULE_TYPE, "dirty_persist", "value_persist",
                 "assign_x_const", "assign_y_lin", "assign_v_guarded"):
        theta[name] = 1.0
    return theta
