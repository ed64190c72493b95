import math
import random

import pytest

import provrefine.hypergraph as hg
from provrefine import likelihood as lk
from provrefine import probmodel as pm
from provrefine.errors import ObservationOutOfRange, SelfLoopArc
from provrefine.hypergraph import Arc, Fact, Hypergraph

from conftest import fact, random_hypergraph, random_seed_set


def _f(name):
    return Fact(name, ())


@pytest.fixture
def four_arc_example():
    """One head h fed by four bodies; three observations pin it down."""
    h = _f("h")
    b = {k: _f(f"b{k}") for k in range(1, 5)}
    arcs = {k: Arc(h, frozenset([b[k]]), f"e{k}") for k in range(1, 5)}
    g = Hypergraph(arcs.values())
    obs = [
        lk.Observation(t=frozenset([b[1]]), r=frozenset([b[1]])),
        lk.Observation(t=frozenset([b[1], b[2], b[4]]),
                       r=frozenset([b[1], b[2], b[4], h])),
        lk.Observation(t=frozenset([b[3], b[4]]),
                       r=frozenset([b[3], b[4], h])),
    ]
    return g, arcs, obs


def test_four_arc_structure(four_arc_example):
    g, arcs, obs = four_arc_example
    bf = lk.bound_terms(g, obs)
    assert bf.negated_arcs == frozenset([arcs[1]])
    (h_key,) = bf.per_head
    ph = bf.per_head[h_key]
    assert ph.candidates == frozenset([arcs[2], arcs[3], arcs[4]])
    assert set(ph.lower_clauses) == {frozenset([arcs[2], arcs[4]]),
                                     frozenset([arcs[3], arcs[4]])}
    assert ph.lower_clauses == ph.upper_clauses


def test_four_arc_bounds_and_exact(four_arc_example):
    g, arcs, obs = four_arc_example
    hp = pm.HyperParams({f"e{k}": 0.5 for k in range(1, 5)})
    bf = lk.bound_terms(g, obs)
    # (1/2) * WMC((S2 or S4) and (S3 or S4)) = 0.5 * 0.625
    for f in (lk.lower_bound, lk.upper_bound):
        assert f(bf, hp) == pytest.approx(math.log(0.3125))
    assert lk.exact_likelihood(g, obs, hp) == pytest.approx(math.log(0.3125))


def test_four_arc_reductions(four_arc_example):
    g, arcs, obs = four_arc_example
    hp = pm.HyperParams({f"e{k}": 0.5 for k in range(1, 5)})
    bf = lk.bound_terms(g, obs)
    low = lk.lower_bound(lk.reduce_lower(bf, drop=[arcs[2]]), hp)
    assert low == pytest.approx(math.log(0.25))
    up = lk.upper_bound(lk.reduce_upper(bf), hp)
    assert up == pytest.approx(math.log(0.375))


def test_reduce_lower_cap_keeps_small_formulas_intact(four_arc_example):
    g, arcs, obs = four_arc_example
    bf = lk.bound_terms(g, obs)
    hp = pm.HyperParams({f"e{k}": 0.5 for k in range(1, 5)})
    assert lk.lower_bound(lk.reduce_lower(bf, cap=8), hp) == \
        lk.lower_bound(bf, hp)
    # cap 1 keeps only the canonically smallest arc per head
    capped = lk.reduce_lower(bf, cap=1)
    assert lk.lower_bound(capped, hp) <= lk.lower_bound(bf, hp)


def test_cyclic_pair_bounds():
    # a <-> b with no seeds: nothing is derivable, yet the upper bound
    # counts the mutually-justifying cycle
    a, b = _f("a"), _f("b")
    g = Hypergraph([Arc(a, frozenset([b]), "r"), Arc(b, frozenset([a]), "r")])
    obs = [lk.Observation(t=frozenset(), r=frozenset([a, b]))]
    hp = pm.HyperParams({"r": 0.5})
    bf = lk.bound_terms(g, obs)
    assert lk.lower_bound(bf, hp) == pm.NEG_INF
    assert lk.upper_bound(bf, hp) == pytest.approx(math.log(0.25))
    assert lk.exact_likelihood(g, obs, hp) == pm.NEG_INF


def test_inconsistent_observation_gives_zero_likelihood():
    a, b = _f("a"), _f("b")
    g = Hypergraph([Arc(b, frozenset([a]), "r")])
    obs = [lk.Observation(t=frozenset([a]), r=frozenset([b]))]  # t not in r
    bf = lk.bound_terms(g, obs)
    hp = pm.HyperParams({"r": 0.5})
    assert bf.impossible
    assert lk.lower_bound(bf, hp) == pm.NEG_INF
    assert lk.upper_bound(bf, hp) == pm.NEG_INF
    assert lk.exact_likelihood(g, obs, hp) == pm.NEG_INF


def test_self_loop_arcs_are_rejected():
    a = _f("a")
    g = Hypergraph([Arc(a, frozenset([a]), "r")])
    with pytest.raises(SelfLoopArc):
        lk.bound_terms(g, [lk.Observation(frozenset(), frozenset())])


def test_foreign_facts_are_rejected():
    a, b = _f("a"), _f("b")
    g = Hypergraph([Arc(b, frozenset([a]), "r")])
    obs = [lk.Observation(t=frozenset(), r=frozenset([_f("ghost")]))]
    with pytest.raises(ObservationOutOfRange):
        lk.bound_terms(g, obs)


def _random_instance(rng, acyclic=False):
    g = random_hypergraph(rng, max_verts=6, max_arcs=8, acyclic=acyclic,
                          empty_body_ok=False)
    while any(a.head in a.body for a in g.arcs):
        g = random_hypergraph(rng, max_verts=6, max_arcs=8, acyclic=acyclic,
                              empty_body_ok=False)
    hp = pm.HyperParams({k: rng.uniform(0.05, 0.95) for k in g.rule_types()})
    obs = []
    for _ in range(rng.randint(1, 3)):
        t = random_seed_set(rng, g)
        r = hg.reach(Hypergraph(a for a in g.arcs if rng.random() < 0.7), t)
        obs.append(lk.Observation(t=t, r=r))
    return g, hp, obs


def test_bounds_sandwich_exact_on_random_instances():
    rng = random.Random(99)
    for _ in range(60):
        g, hp, obs = _random_instance(rng)
        bf = lk.bound_terms(g, obs)
        lo = lk.lower_bound(bf, hp)
        up = lk.upper_bound(bf, hp)
        exact = lk.exact_likelihood(g, obs, hp)
        assert lo <= exact + 1e-9
        assert exact <= up + 1e-9


def test_upper_equals_exact_on_acyclic_instances():
    rng = random.Random(7)
    for _ in range(40):
        g, hp, obs = _random_instance(rng, acyclic=True)
        bf = lk.bound_terms(g, obs)
        up = lk.upper_bound(bf, hp)
        exact = lk.exact_likelihood(g, obs, hp)
        if exact == pm.NEG_INF:
            assert up == pm.NEG_INF
        else:
            assert up == pytest.approx(exact, abs=1e-9)


def test_loop_formula_evaluates_reach_equality():
    rng = random.Random(3)
    for _ in range(40):
        g, hp, obs = _random_instance(rng)
        for o in obs:
            f = lk.loop_formula(g, o.t, o.r)
            for chosen, _ in pm._enumerate_subgraphs(
                    pm.ProbModel(g, pm.HyperParams.uniform(g.rule_types()))):
                sub = Hypergraph(chosen)
                expect = hg.reach(sub, o.t) == o.r
                assert f.evaluate(frozenset(chosen)) == expect


def test_loop_formula_wmc_equals_exact_likelihood():
    rng = random.Random(41)
    for _ in range(25):
        g, hp, obs = _random_instance(rng)
        formulas = [lk.loop_formula(g, o.t, o.r) for o in obs]
        wmc = lk.loop_formula_wmc(g, formulas, hp)
        exact = lk.exact_likelihood(g, obs, hp)
        if exact == pm.NEG_INF:
            assert wmc == pm.NEG_INF
        else:
            assert wmc == pytest.approx(exact, abs=1e-9)


def test_observe_projects_seeds_and_reach():
    from provrefine import analysis as ana
    from provrefine import datalog

    an = datalog.smudge_fixture()
    a = an.bottom().with_flips(["0"])
    o = lk.observe(an, a)
    assert o.t == frozenset([Fact("cheap", (0,))])
    assert o.consistent()
    assert o.source_abstraction == a


def test_observation_file_round_trip():
    obs = [lk.Observation(t=frozenset([_f("a")]),
                          r=frozenset([_f("a"), _f("b")])),
           lk.Observation(t=frozenset(), r=frozenset())]
    text = lk.serialize_observations(obs)
    back = lk.parse_observations(text)
    assert [(o.t, o.r) for o in back] == [(o.t, o.r) for o in obs]
