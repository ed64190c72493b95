"""Directed hypergraph core.

Facts are ground atoms; an arc records one instantiated inference step
(head, body set, rule-type tag).  Reachability is the least fixpoint of
"if all body facts hold, the head holds".  Distances use the max-plus
hyperpath metric, which in turn defines forward arcs; loops and
justifications support the exact likelihood oracle.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import EmptyLoop, OracleLimitExceeded, ParseError

INFINITY = float("inf")


@functools.total_ordering
@dataclass(frozen=True)
class Fact:
    """A ground atom: relation name plus a tuple of constants."""

    relation: str
    args: tuple = ()

    def _key(self):
        return (self.relation,) + tuple(
            (0, a) if isinstance(a, int) else (1, a) for a in self.args
        )

    def __lt__(self, other: "Fact") -> bool:
        return self._key() < other._key()

    def __str__(self) -> str:
        if not self.args:
            return self.relation
        return "%s(%s)" % (self.relation, ",".join(str(a) for a in self.args))


@functools.total_ordering
@dataclass(frozen=True)
class Arc:
    """An instantiated rule: head <- body, tagged with its rule type."""

    head: Fact
    body: frozenset
    rule_type: str

    def __post_init__(self):
        if not self.rule_type:
            raise ValueError("arc rule_type must be non-empty")
        if not isinstance(self.body, frozenset):
            object.__setattr__(self, "body", frozenset(self.body))

    def _key(self):
        return (self.head._key(), tuple(sorted(b._key() for b in self.body)),
                self.rule_type)

    def __lt__(self, other: "Arc") -> bool:
        return self._key() < other._key()

    def __str__(self) -> str:
        parts = [str(self.head), "<-"]
        parts.extend(str(b) for b in sorted(self.body))
        parts.extend(["@", self.rule_type])
        return " ".join(parts)


class Hypergraph:
    """An immutable set of arcs; vertices are the facts the arcs mention."""

    def __init__(self, arcs: Iterable[Arc] = ()):
        self.arcs = frozenset(arcs)
        verts = set()
        for a in self.arcs:
            verts.add(a.head)
            verts.update(a.body)
        self.vertices = frozenset(verts)

    def __len__(self) -> int:
        return len(self.arcs)

    def __iter__(self) -> Iterator[Arc]:
        return iter(self.sorted_arcs())

    def __eq__(self, other) -> bool:
        return isinstance(other, Hypergraph) and self.arcs == other.arcs

    def __hash__(self) -> int:
        return hash(self.arcs)

    def __le__(self, other: "Hypergraph") -> bool:
        return self.arcs <= other.arcs

    def sorted_arcs(self) -> list:
        return sorted(self.arcs)

    def rule_types(self) -> set:
        return {a.rule_type for a in self.arcs}

    def restrict(self, arcs: Iterable[Arc]) -> "Hypergraph":
        return Hypergraph(arcs)


def reach(g: Hypergraph, t: Iterable[Fact]) -> frozenset:
    """Least set R with T subseteq R that is closed under the arcs of g."""
    reached = set(t)
    # index arcs by body fact; count satisfied body members per arc
    by_body = {}
    pending = {}
    worklist = list(reached)
    for arc in g.arcs:
        if not arc.body:
            if arc.head not in reached:
                reached.add(arc.head)
                worklist.append(arc.head)
            continue
        pending[arc] = len(arc.body)
        for b in arc.body:
            by_body.setdefault(b, []).append(arc)
    seen_body = set()
    while worklist:
        f = worklist.pop()
        if f in seen_body:
            continue
        seen_body.add(f)
        for arc in by_body.get(f, ()):
            pending[arc] -= 1
            if pending[arc] == 0 and arc.head not in reached:
                reached.add(arc.head)
                worklist.append(arc.head)
    return frozenset(reached)


def induced(g: Hypergraph, t: Iterable[Fact]) -> Hypergraph:
    """Sub-hypergraph keeping arcs fully contained in the fact set t."""
    ts = frozenset(t)
    return Hypergraph(a for a in g.arcs if a.head in ts and a.body <= ts)


def distances(g: Hypergraph, t: Iterable[Fact]) -> dict:
    """Max-plus hyperpath distance from the seed set t to every vertex.

    d(h) = 0 for seeds, +inf for unreachable facts, and otherwise the
    minimum over arcs (h, B) of max_b d(b) + 1.  Computed Dijkstra-style:
    vertices are finalized in nondecreasing distance order; an arc fires
    once its whole body is finalized.
    """
    import heapq

    seeds = frozenset(t)
    dist = {v: (0 if v in seeds else INFINITY) for v in g.vertices}
    for s in seeds:
        dist[s] = 0
    pending = {}
    by_body = {}
    heap = [(0, s._key(), s) for s in seeds]
    for arc in g.arcs:
        if not arc.body:
            if dist.get(arc.head, INFINITY) > 1:
                dist[arc.head] = 1
                heapq.heappush(heap, (1, arc.head._key(), arc.head))
            continue
        pending[arc] = len(arc.body)
        for b in arc.body:
            by_body.setdefault(b, []).append(arc)
    heapq.heapify(heap)
    done = set()
    while heap:
        d, _, v = heapq.heappop(heap)
        if v in done or d > dist.get(v, INFINITY):
            continue
        done.add(v)
        for arc in by_body.get(v, ()):
            pending[arc] -= 1
            if pending[arc] == 0:
                cand = max(dist[b] for b in arc.body) + 1
                if cand < dist.get(arc.head, INFINITY):
                    dist[arc.head] = cand
                    heapq.heappush(heap, (cand, arc.head._key(), arc.head))
    return dist


def forward_arcs(g: Hypergraph, t: Iterable[Fact]) -> Hypergraph:
    """Arcs whose head is strictly farther from t than every body fact.

    Removing the non-forward arcs preserves distances and reachability
    from t.
    """
    d = distances(g, t)
    return Hypergraph(
        a for a in g.arcs
        if all(d[a.head] > d[b] for b in a.body)
    )


def dependency_graph(g: Hypergraph) -> dict:
    """Directed graph with an edge h -> b for every arc (h, B) and b in B."""
    edges = {v: set() for v in g.vertices}
    for a in g.arcs:
        edges[a.head].update(a.body)
    return edges


def _strongly_connected(vertices: frozenset, edges: dict) -> bool:
    """Is the subgraph induced by `vertices` strongly connected?"""
    if len(vertices) == 1:
        return True

    def explore(succ):
        start = next(iter(vertices))
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for w in succ.get(v, ()):
                if w in vertices and w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen == vertices

    fwd = {v: edges.get(v, ()) for v in vertices}
    rev = {v: set() for v in vertices}
    for v in vertices:
        for w in edges.get(v, ()):
            if w in vertices:
                rev[w].add(v)
    return explore(fwd) and explore(rev)


def loops(g: Hypergraph, limit: int = 16) -> set:
    """All vertex subsets inducing a strongly connected dependency subgraph.

    Includes non-maximal loops and singleton ("trivial") loops.
    Exponential; guarded by `limit` on the vertex count.
    """
    verts = sorted(g.vertices)
    if len(verts) > limit:
        raise OracleLimitExceeded(
            f"loop enumeration over {len(verts)} vertices (limit {limit})")
    edges = dependency_graph(g)
    out = set()
    n = len(verts)
    for mask in range(1, 1 << n):
        subset = frozenset(verts[i] for i in range(n) if mask >> i & 1)
        if _strongly_connected(subset, edges):
            out.add(subset)
    return out


def justifications(g: Hypergraph, l: Iterable[Fact]) -> set:
    """Arcs that can support loop l from outside: head in l, body disjoint."""
    ls = frozenset(l)
    if not ls:
        raise EmptyLoop("justifications of an empty loop")
    return {a for a in g.arcs if a.head in ls and not (a.body & ls)}


# ---------------------------------------------------------------------------
# provenance text format:  head <- body1 body2 ... @ rule_type

_FACT_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_']*)(?:\(([^()]*)\))?$")


def parse_fact(text: str) -> Fact:
    m = _FACT_RE.match(text.strip())
    if not m:
        raise ValueError(f"malformed fact: {text!r}")
    rel, argtext = m.groups()
    if argtext is None:
        return Fact(rel)
    if argtext == "":
        return Fact(rel, ())
    args = []
    for tok in argtext.split(","):
        tok = tok.strip()
        if re.fullmatch(r"-?\d+", tok):
            args.append(int(tok))
        elif tok:
            args.append(tok)
        else:
            raise ValueError(f"empty argument in fact: {text!r}")
    return Fact(rel, tuple(args))


def parse_arc(text: str) -> Arc:
    if "@" not in text:
        raise ValueError(f"arc missing rule type: {text!r}")
    main, rule_type = text.rsplit("@", 1)
    rule_type = rule_type.strip()
    if "<-" not in main:
        raise ValueError(f"arc missing '<-': {text!r}")
    head_text, body_text = main.split("<-", 1)
    head = parse_fact(head_text)
    body = frozenset(parse_fact(tok) for tok in body_text.split())
    return Arc(head, body, rule_type)


def parse_provenance(text: str) -> Hypergraph:
    arcs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            arcs.append(parse_arc(line))
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from exc
    return Hypergraph(arcs)


def serialize_provenance(g: Hypergraph) -> str:
    """Canonical text form; parse(serialize(g)) == g, byte for byte stable."""
    return "".join(str(a) + "\n" for a in g.sorted_arcs())
