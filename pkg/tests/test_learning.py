import math
import random

import pytest

from provrefine import learning
from provrefine import likelihood as lk
from provrefine import probmodel as pm
from provrefine.errors import CorpusTooSmall, DegenerateTrainingSet
from provrefine.hypergraph import Arc, Fact, Hypergraph


def _f(name):
    return Fact(name, ())


def _bernoulli_corpus(successes: int, total: int):
    """`total` one-arc programs; the arc survived in `successes` of them."""
    a, b = _f("a"), _f("b")
    g = Hypergraph([Arc(b, frozenset([a]), "coin")])
    groups = []
    for i in range(total):
        r = frozenset([a, b]) if i < successes else frozenset([a])
        groups.append(learning.ObservationGroup(
            g, [lk.Observation(t=frozenset([a]), r=r)]))
    return learning.TrainingSet(groups)


def test_line_search_quadratic():
    got = learning.line_search(lambda x: -(x - 0.3) ** 2, 0.0, 1.0)
    assert got == pytest.approx(0.3, abs=1e-4)


def test_line_search_monotone_hits_endpoint():
    assert learning.line_search(lambda x: x, 0.0, 1.0) == pytest.approx(1.0, abs=1e-6)
    assert learning.line_search(lambda x: -x, 0.0, 1.0) == pytest.approx(0.0, abs=1e-6)


def test_line_search_constant_prefers_leftmost():
    assert learning.line_search(lambda x: 5.0, 0.0, 1.0) == 0.0


def test_bernoulli_mle_recovers_frequency():
    ts = _bernoulli_corpus(3, 10)
    hp = learning.learn(ts)
    assert hp.theta["coin"] == pytest.approx(0.3, abs=1e-4)


def test_all_successes_drives_theta_to_one():
    hp = learning.learn(_bernoulli_corpus(5, 5))
    assert hp.theta["coin"] == pytest.approx(1.0, abs=1e-4)


def test_unconstrained_types_are_flagged():
    # the "noise" arc's head is never observed derived nor refuted
    a, b, c = _f("a"), _f("b"), _f("c")
    g = Hypergraph([Arc(b, frozenset([a]), "coin"),
                    Arc(c, frozenset([_f("never")]), "noise")])
    ts = learning.TrainingSet([learning.ObservationGroup(
        g, [lk.Observation(t=frozenset([a]), r=frozenset([a, b]))])])
    hp = learning.learn(ts)
    assert hp.theta["noise"] == 1.0
    assert "noise" in hp.unconstrained
    assert "coin" not in hp.unconstrained


def test_degenerate_training_set_raises():
    g = Hypergraph([Arc(_f("b"), frozenset([_f("a")]), "coin")])
    ts = learning.TrainingSet([learning.ObservationGroup(
        g, [lk.Observation(t=frozenset(), r=frozenset())])])
    with pytest.raises(DegenerateTrainingSet):
        learning.learn(ts)


def test_learned_theta_is_a_likelihood_maximum():
    ts = _bernoulli_corpus(7, 10)
    hp = learning.learn(ts)
    obj = learning._Objective(ts)
    best = obj.value(hp)
    for delta in (-0.05, 0.05):
        trial = hp.copy()
        trial.theta["coin"] += delta
        assert obj.value(trial) <= best + 1e-9


def test_sample_training_shapes():
    from provrefine import datalog

    an = datalog.smudge_fixture()
    rng = random.Random(0)
    ts = learning.sample_training(an, 6, 2, rng)
    assert len(ts.groups) == 1
    assert len(ts.observations) == 6
    for o in ts.observations:
        assert 1 <= len(o.source_abstraction.flips()) <= 2
        assert o.consistent()


def test_merge_concatenates_groups():
    a = _bernoulli_corpus(1, 2)
    b = _bernoulli_corpus(2, 2)
    merged = learning.TrainingSet.merge([a, b])
    assert len(merged.groups) == 4


def test_leave_one_out_folds():
    sets = [_bernoulli_corpus(1, 1), _bernoulli_corpus(0, 1),
            _bernoulli_corpus(1, 1)]
    folds = learning.leave_one_out(sets)
    assert len(folds) == 3
    # fold 1 drops the failure, so the remaining corpus is all-successes
    assert folds[1].theta["coin"] == pytest.approx(1.0, abs=1e-4)
    assert folds[0].theta["coin"] == pytest.approx(0.5, abs=1e-3)


def test_leave_one_out_needs_two_programs():
    with pytest.raises(CorpusTooSmall):
        learning.leave_one_out([_bernoulli_corpus(1, 1)])
