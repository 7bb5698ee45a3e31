import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hierbeam.alloc import (alpha_fair, draw_activation, f_alpha, feasible, gamma_from_kappa, in_activation_sets,
                            mt_closed_form, pf_closed_form, resolve_alpha, theta_from_kappa)
from hierbeam.codebook import CodebookTree, FlowPopulation
from hierbeam.errors import EmptyPopulation, NonPositiveRate
from hierbeam.oracles import grid_search_alpha_fair
from strategies import trees


@pytest.mark.parametrize("gamma, ok", [((0.4, 0.6, 0.6), True), ((0.5, 0.6, 0.0), False)])
def test_feasible_examples(fork, gamma, ok):
    assert feasible(fork, gamma) is ok


@given(trees(), st.data())
def test_kappa_parametrization_is_always_feasible(tree, data):
    kappa = data.draw(st.lists(st.floats(0, 1), min_size=tree.n, max_size=tree.n))
    assert feasible(tree, gamma_from_kappa(tree, kappa))


def test_pf_fork_one_flow_each(fork):
    res = alpha_fair(fork, FlowPopulation.from_counts([1, 1, 1]), 1)
    np.testing.assert_allclose(res.gamma, [1 / 3, 2 / 3, 2 / 3], rtol=1e-15)
    np.testing.assert_array_equal(res.delta, 1.0)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1, 2, 4, "maxmin"])
def test_all_flows_on_one_leaf(fixture_tree, alpha):
    leaf = fixture_tree.labels.index(6)
    flows = FlowPopulation(np.full(3, leaf), np.array([1.0, 2.0, 3.0]))
    res = alpha_fair(fixture_tree, flows, alpha)
    assert res.kappa[leaf] == 1.0 and res.gamma[leaf] == 1.0
    for a in fixture_tree.ancestors(leaf):
        assert res.gamma[a] == 0.0
    a = resolve_alpha(alpha)
    w = flows.rate ** (1 / a - 1)
    np.testing.assert_allclose(res.delta, w / w.sum(), rtol=1e-12)


def test_fork_rates_alpha_half_vs_grid(fork):
    flows = FlowPopulation([0, 1, 2], [1.0, 2.0, 4.0])
    res = alpha_fair(fork, flows, 0.5)
    grid_u, grid_k = grid_search_alpha_fair(fork, flows, 0.5, resolution=1e-3)
    assert res.utility >= grid_u - 1e-12
    assert res.utility - grid_u <= 1e-4
    np.testing.assert_allclose(res.kappa, grid_k, atol=2e-3)


def test_pf_binary_tree_exact():
    t = CodebookTree.regular(2, 2)
    res = pf_closed_form(t, np.ones(7, dtype=int))
    assert list(res.gamma) == [1 / 7, 2 / 7, 2 / 7, 4 / 7, 4 / 7, 4 / 7, 4 / 7]
    assert np.all(np.abs(t.path_sums(res.gamma)[3:] - 1) <= 1e-12)


def test_pf_single_node():
    res = pf_closed_form(CodebookTree.line(1), [5])
    assert res.kappa[0] == res.gamma[0] == 1.0
    np.testing.assert_array_equal(res.delta, 0.2)


def test_pf_line():
    res = pf_closed_form(CodebookTree.line(2), [1, 1])
    assert res.kappa[0] == 0.5
    np.testing.assert_array_equal(res.gamma, [0.5, 0.5])


@given(trees(), st.data())
def test_pf_closed_form_matches_dp_route(tree, data):
    counts = np.array(data.draw(st.lists(st.integers(0, 4), min_size=tree.n, max_size=tree.n)))
    if counts.sum() == 0:
        counts[0] = 1
    res = pf_closed_form(tree, counts)
    np.testing.assert_allclose(res.gamma, gamma_from_kappa(tree, res.kappa), rtol=1e-12, atol=1e-15)
    # PF optimum: each beam's activity is proportional to its flow count along any
    # saturated path, so rates times counts never exceed 1 on a path
    assert feasible(tree, res.gamma)
    # alpha close to one converges to the PF solution
    near = alpha_fair(tree, FlowPopulation.from_counts(counts), 1.0 + 1e-7)
    np.testing.assert_allclose(near.gamma, res.gamma, atol=1e-5)


@pytest.mark.parametrize("counts, gamma", [
    ([3, 2], [0, 1]),
    ([3, 0], [1, 1]),
])
def test_mt_line_examples(counts, gamma):
    np.testing.assert_array_equal(mt_closed_form(CodebookTree.line(2), counts).gamma, gamma)


def test_mt_flows_only_at_root():
    t = CodebookTree.regular(2, 2)
    np.testing.assert_array_equal(mt_closed_form(t, [4, 0, 0, 0, 0, 0, 0]).gamma, 1.0)


def test_mt_requires_equal_rates_within_beam(line2):
    with pytest.raises(ValueError):
        alpha_fair(line2, FlowPopulation([1, 1], [1.0, 2.0]), 0)


def test_mt_allocation_activates_deepest_nonempty(fixture_tree):
    counts = np.zeros(10, dtype=int)
    counts[[0, 1, fixture_tree.labels.index(7)]] = 1
    res = alpha_fair(fixture_tree, FlowPopulation.from_counts(counts), 0)
    active = {fixture_tree.labels[v] for v in np.flatnonzero(res.gamma * (counts > 0))}
    assert active == {7}


@pytest.mark.parametrize("alpha", [0.5, 2.0, 4.0])
def test_theta_consistent_with_utility(fork, alpha):
    flows = FlowPopulation([0, 1, 1, 2], [1.0, 1.0, 3.0, 2.0])
    res = alpha_fair(fork, flows, alpha)
    assert res.theta[0] == pytest.approx(res.utility, rel=1e-10)
    assert theta_from_kappa(fork, res.phi, res.kappa, alpha)[0] == pytest.approx(res.utility, rel=1e-10)


@given(trees(max_nodes=4), st.data())
def test_dp_is_locally_optimal(tree, data):
    alpha = data.draw(st.sampled_from([0.5, 2.0, 4.0]))
    k = data.draw(st.integers(1, 6))
    beam = data.draw(st.lists(st.integers(0, tree.n - 1), min_size=k, max_size=k))
    rate = data.draw(st.lists(st.floats(0.5, 5.0), min_size=k, max_size=k))
    flows = FlowPopulation(beam, rate)
    res = alpha_fair(tree, flows, alpha)
    rng = np.random.default_rng(0)
    for _ in range(20):
        kap = np.clip(res.kappa + rng.normal(0, 1e-3, tree.n), 0, 1)
        u = theta_from_kappa(tree, res.phi, kap, alpha)[0]
        assert u <= res.utility + 1e-9 * max(1, abs(res.utility))


def test_large_alpha_has_no_overflow(fixture_tree):
    flows = FlowPopulation(np.arange(10), np.linspace(1e-3, 1e3, 10))
    res = alpha_fair(fixture_tree, flows, 64.0)
    assert np.all(np.isfinite(res.kappa)) and feasible(fixture_tree, res.gamma)


def test_maxmin_equalizes_rates_better_than_pf(fork):
    flows = FlowPopulation([0, 1, 2], [1.0, 4.0, 4.0])
    rates = {}
    for a in (1, "maxmin"):
        res = alpha_fair(fork, flows, a)
        rates[a] = flows.rate * res.gamma[flows.beam] * res.delta
    assert rates["maxmin"].min() > rates[1].min()


def test_empty_population_rejected(fork):
    with pytest.raises(EmptyPopulation):
        alpha_fair(fork, FlowPopulation([], []), 2)


def test_nonpositive_rate_rejected(fork):
    with pytest.raises(NonPositiveRate):
        alpha_fair(fork, FlowPopulation([0], [0.0]), 2)


def test_f_alpha_values():
    assert f_alpha(np.e, 1.0) == pytest.approx(1.0)
    assert f_alpha(4.0, 0.5) == pytest.approx(4.0)
    assert f_alpha(2.0, 2.0) == pytest.approx(-0.5)


def test_ops_linear_in_size():
    rng = np.random.default_rng(3)
    ratios = []
    for n in (10, 100, 1000):
        t = CodebookTree.from_edges([(int(rng.integers(1, v + 1)), v + 1) for v in range(1, n)], n_nodes=n)
        flows = FlowPopulation(rng.integers(0, n, 3 * n), rng.uniform(1, 2, 3 * n))
        ratios.append(alpha_fair(t, flows, 2).ops / (4 * n))
    assert max(ratios) / min(ratios) < 1.5


# scheduler -------------------------------------------------------------------

def test_draw_root_always_on(fixture_tree):
    kappa = np.zeros(10)
    kappa[0] = 1.0
    z = draw_activation(fixture_tree, kappa, rng_seed=1, size=100)
    assert np.all(z[:, 0] == 1) and np.all(z[:, 1:] == 0)


def test_draw_all_off(fixture_tree):
    assert not draw_activation(fixture_tree, np.zeros(10), rng_seed=1, size=100).any()


def test_draw_line_frequency():
    z = draw_activation(CodebookTree.line(2), [0.5, 1.0], rng_seed=7, size=100_000)
    sigma = np.sqrt(0.25 / 100_000)
    assert abs(z[:, 1].mean() - 0.5) <= 3 * sigma


@given(trees(), st.data())
def test_draws_are_activation_sets(tree, data):
    kappa = data.draw(st.lists(st.floats(0, 1), min_size=tree.n, max_size=tree.n))
    for z in draw_activation(tree, kappa, rng_seed=data.draw(st.integers(0, 2 ** 32)), size=50):
        assert in_activation_sets(tree, z)


def test_draw_is_reproducible(fixture_tree):
    k = np.full(10, 0.4)
    assert np.array_equal(draw_activation(fixture_tree, k, 5, 20), draw_activation(fixture_tree, k, 5, 20))
