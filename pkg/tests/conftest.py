"""Shared generators and oracles for the test suite."""

from __future__ import annotations

import itertools
import random

from provrefine.hypergraph import Arc, Fact, Hypergraph


def fact(i: int) -> Fact:
    return Fact("v", (i,))


def random_hypergraph(rng: random.Random, max_verts: int = 12,
                      max_arcs: int = 20, acyclic: bool = False,
                      empty_body_ok: bool = True,
                      rule_types=("r0", "r1", "r2")) -> Hypergraph:
    """A random hypergraph over integer-labelled facts.

    With acyclic=True every arc points from lower-numbered facts to a
    strictly higher-numbered head, so the dependency graph has no cycles.
    """
    n = rng.randint(1, max_verts)
    m = rng.randint(0, max_arcs)
    arcs = set()
    for _ in range(m):
        head = rng.randrange(n)
        lo = 0 if not acyclic else None
        if acyclic:
            if head == 0:
                if not empty_body_ok:
                    continue
                body = ()
            else:
                k = rng.randint(0 if empty_body_ok else 1, min(3, head))
                body = rng.sample(range(head), k)
        else:
            k = rng.randint(0 if empty_body_ok else 1, 3)
            body = [b for b in rng.sample(range(n), min(k, n)) if b != head]
            if not body and not empty_body_ok:
                continue
        arcs.add(Arc(fact(head), frozenset(fact(b) for b in body),
                     rng.choice(rule_types)))
    return Hypergraph(arcs)


def random_seed_set(rng: random.Random, g: Hypergraph) -> frozenset:
    verts = sorted(g.vertices)
    if not verts:
        return frozenset()
    k = rng.randint(0, len(verts))
    return frozenset(rng.sample(verts, k))


def naive_closure(g: Hypergraph, seeds) -> frozenset:
    """Reachability by repeated full passes over the arc set."""
    reached = set(seeds)
    changed = True
    while changed:
        changed = False
        for arc in g.arcs:
            if arc.head not in reached and arc.body <= reached:
                reached.add(arc.head)
                changed = True
    return frozenset(reached)


def brute_force_distances(g: Hypergraph, seeds) -> dict:
    """Max-plus hyperpath distances by value iteration to a fixpoint."""
    from provrefine.hypergraph import INFINITY

    dist = {v: INFINITY for v in g.vertices}
    for s in seeds:
        dist[s] = 0
    changed = True
    while changed:
        changed = False
        for arc in g.arcs:
            worst = max((dist.get(b, INFINITY) for b in arc.body), default=0)
            if worst is not INFINITY and worst + 1 < dist.get(arc.head, INFINITY):
                dist[arc.head] = worst + 1
                changed = True
    return dist


def all_subgraph_probability(g: Hypergraph, theta: dict, predicate) -> float:
    """Total probability mass of sub-arc-sets satisfying the predicate."""
    arcs = sorted(g.arcs)
    total = 0.0
    for mask in range(1 << len(arcs)):
        p = 1.0
        chosen = []
        for i, a in enumerate(arcs):
            t = theta[a.rule_type]
            if mask >> i & 1:
                p *= t
                chosen.append(a)
            else:
                p *= 1.0 - t
        if p > 0.0 and predicate(frozenset(chosen)):
            total += p
    return total
