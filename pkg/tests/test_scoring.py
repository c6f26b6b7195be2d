import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainshort.budget import Budget
from chainshort.errors import EmptyCorpus, InvalidArgument, MissingAnnotation
from chainshort.graph import ResourceDelta, SolutionState
from chainshort.mining import StatsCorpus
from chainshort.scoring import (
    NodeWeight,
    emergency_factor,
    harmonic_mean,
    node_weight,
    percentile_ranks,
    shortcut_cost,
    shortcut_value,
    utility,
)


def unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def node_with(sim_task: float, sim_final: float, compilable: bool):
    # node at angle 0; task / final vectors placed at the angles giving the wanted cosines
    node = SolutionState(1, "x", embedding=unit(0.0), compilable=compilable)
    return node, unit(math.acos(sim_task)), unit(math.acos(sim_final))


def test_node_weight_is_product():
    node, task, final = node_with(0.8, 0.9, True)
    w = node_weight(node, task, final)
    assert w.weight == pytest.approx(0.72, abs=1e-12)
    assert w.compilable == 1


def test_uncompilable_node_weighs_zero():
    node, task, final = node_with(0.8, 0.9, False)
    assert node_weight(node, task, final).weight == 0


def test_final_node_weight_equals_task_similarity():
    node, task, _ = node_with(0.65, 1.0, True)
    w = node_weight(node, task, node.embedding)
    assert w.sim_final == pytest.approx(1.0) and w.weight == pytest.approx(w.sim_task)


def test_negative_similarities_are_not_clamped():
    node, task, final = node_with(-0.5, 0.4, True)
    assert node_weight(node, task, final).weight == pytest.approx(-0.2)


def test_node_weight_requires_annotations():
    with pytest.raises(MissingAnnotation):
        node_weight(SolutionState(1, "x"), unit(0), unit(0))


@pytest.mark.parametrize(
    "target, source, expected",
    [(0.72, 0.50, 0.22), (0.4, 0.4, 0.0), (0.0, 0.3, -0.3)],
)
def test_shortcut_value(target, source, expected):
    assert shortcut_value(target, source) == pytest.approx(expected, abs=1e-12)
    wt = NodeWeight(2, 0, 0, 1, target)
    ws = NodeWeight(1, 0, 0, 1, source)
    assert shortcut_value(wt, ws) == pytest.approx(expected, abs=1e-12)


def corpus_of(times, tokens=None):
    return StatsCorpus(list(times), list(tokens if tokens is not None else [int(t) for t in times]))


def test_percentile_strict_less_than():
    assert percentile_ranks(corpus_of([10, 20, 30, 40]), 30, 30) == (0.5, 0.5)
    assert percentile_ranks(corpus_of([10, 20, 30, 40]), 5, 5) == (0.0, 0.0)


def test_percentile_single_entry_own_value_is_zero():
    assert percentile_ranks(corpus_of([7.0]), 7.0, 7) == (0.0, 0.0)


def test_percentile_empty_corpus():
    with pytest.raises(EmptyCorpus):
        percentile_ranks(corpus_of([]), 1.0, 1)


def test_percentile_matches_brute_force_on_random_corpus():
    rng = np.random.default_rng(50)
    times = rng.uniform(0, 100, 50).round(1)
    tokens = rng.integers(0, 1000, 50)
    corpus = StatsCorpus(list(times), list(tokens))
    for t0, tau0 in zip(rng.uniform(-5, 105, 40).round(1), rng.integers(-5, 1005, 40)):
        alpha, beta = percentile_ranks(corpus, float(t0), int(tau0))
        assert alpha == sum(t < t0 for t in times) / 50
        assert beta == sum(t < tau0 for t in tokens) / 50


@given(
    st.lists(st.integers(0, 50), min_size=1, max_size=30),
    st.integers(-5, 55),
    st.integers(0, 10),
)
def test_percentile_monotone_and_bounded(values, t0, bump):
    corpus = corpus_of(values)
    a0, b0 = percentile_ranks(corpus, t0, t0)
    a1, b1 = percentile_ranks(corpus, t0 + bump, t0 + bump)
    assert 0 <= a0 <= a1 <= 1 and 0 <= b0 <= b1 <= 1


@given(st.lists(st.integers(0, 50), min_size=1, max_size=30), st.data())
def test_percentile_of_corpus_member_below_one(values, data):
    # a mined shortcut's own consumption is in the corpus, so its rank stays < 1
    member = data.draw(st.sampled_from(values))
    alpha, beta = percentile_ranks(corpus_of(values), member, member)
    assert alpha < 1 and beta < 1


def test_harmonic_mean_examples():
    assert harmonic_mean(0.2, 0.8) == pytest.approx(0.32, abs=1e-15)
    assert harmonic_mean(0.37, 0.37) == 0.37
    assert harmonic_mean(0, 0.9) == 0
    assert harmonic_mean(0, 0) == 0
    with pytest.raises(InvalidArgument):
        harmonic_mean(-0.1, 0.5)


nonneg = st.floats(0, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=300)
@given(nonneg, nonneg)
def test_harmonic_mean_means_inequality(a, b):
    h = harmonic_mean(a, b)
    assert h == pytest.approx(harmonic_mean(b, a), rel=1e-12, abs=1e-12)
    assert h <= math.sqrt(a * b) * (1 + 1e-12) + 1e-12
    assert math.sqrt(a * b) <= (a + b) / 2 * (1 + 1e-12) + 1e-12


def test_shortcut_cost_combines_ranks():
    corpus = StatsCorpus([1, 2, 3, 4, 5], [10, 20, 30, 40, 50])
    cost = shortcut_cost(corpus, 2.5, 45)
    assert (cost.alpha, cost.beta) == (0.4, 0.8)
    assert cost.cost == pytest.approx(2 * 0.4 * 0.8 / 1.2)


def budget_used(fraction_t, fraction_tau):
    b = Budget(100.0, 1000)
    b.record_usage(ResourceDelta(100.0 * fraction_t, round(1000 * fraction_tau)))
    return b


def test_emergency_factor_examples():
    assert emergency_factor(budget_used(0.5, 0.5)).gamma == pytest.approx(0.5)
    assert emergency_factor(budget_used(0.9, 0.1)).gamma == pytest.approx(0.18)
    assert emergency_factor(Budget(10, 10)).gamma == 0


def test_emergency_factor_may_exceed_one():
    assert emergency_factor(budget_used(2.0, 3.0)).gamma == pytest.approx(2.4)


@pytest.mark.parametrize("gamma, expected", [(0.0, 0.8), (1.0, -0.3), (0.5, 0.25), (7.0, -0.3), (-1.0, 0.8)])
def test_utility_examples(gamma, expected):
    assert utility(0.8, 0.3, gamma) == pytest.approx(expected, abs=1e-12)


unit_interval = st.floats(0, 1, allow_nan=False)
values = st.floats(-1, 1, allow_nan=False)


@given(values, unit_interval, unit_interval, st.floats(0.001, 0.5))
def test_utility_monotonicity(value, cost, gamma, step):
    assert utility(value + step, cost, gamma) >= utility(value, cost, gamma)
    assert utility(value, cost + step, gamma) <= utility(value, cost, gamma)


@given(values, unit_interval, st.floats(0.01, 0.99))
def test_utility_gamma_derivative(value, cost, gamma):
    h = 1e-6
    derivative = (utility(value, cost, gamma + h) - utility(value, cost, gamma - h)) / (2 * h)
    assert derivative == pytest.approx(-(value + cost), abs=1e-6)


@given(
    st.lists(st.tuples(st.floats(0.1, 100), st.integers(1, 10_000)), min_size=1, max_size=25),
    st.floats(0.1, 100),
    st.integers(1, 10_000),
    # powers of two scale floats exactly, so strict comparisons are preserved
    st.sampled_from([2, 4, 8, 1024]),
)
def test_ranks_are_scale_free(pairs, t0, tau0, scale):
    corpus = StatsCorpus([p[0] for p in pairs], [p[1] for p in pairs])
    scaled = StatsCorpus([p[0] * scale for p in pairs], [p[1] * scale for p in pairs])
    assert percentile_ranks(corpus, t0, tau0) == percentile_ranks(scaled, t0 * scale, tau0 * scale)
