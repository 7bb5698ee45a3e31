import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hierbeam.codebook import CodebookTree
from hierbeam.elastic import TrafficModel
from hierbeam.errors import Inadmissible, TooLarge
from hierbeam.fixtures import reference_traffic, reference_tree
from hierbeam.oracles import erlang_b
from hierbeam.streaming import (StreamingModel, admissible, blocking_enumeration, blocking_probabilities,
                                enumerate_states, streaming_stationary_prob)
from strategies import trees


def _model(tree, xi, s, rho, r=None):
    r = np.ones(tree.n) if r is None else r
    return StreamingModel(tree, xi, np.asarray(s), TrafficModel.from_rho(rho, r))


def _line_model():
    return _model(CodebookTree.line(2), 2, [1, 1], [1.0, 1.0])


# admission ---------------------------------------------------------------------

def test_empty_state_admissible(fixture_tree):
    m = _model(fixture_tree, 3, np.ones(10, dtype=int), np.full(10, 0.1))
    assert admissible(m, np.zeros(10, dtype=int))


@pytest.mark.parametrize("state, ok", [([1, 1], True), ([1, 2], False), ([2, 0], True), ([-1, 0], False)])
def test_line_admission(state, ok):
    assert admissible(_line_model(), state) is ok


@given(trees(max_nodes=6), st.data())
def test_admission_matches_path_sums(tree, data):
    xi = data.draw(st.integers(1, 6))
    s = data.draw(st.lists(st.integers(1, xi), min_size=tree.n, max_size=tree.n))
    n = data.draw(st.lists(st.integers(0, 4), min_size=tree.n, max_size=tree.n))
    m = _model(tree, xi, s, np.full(tree.n, 0.5))
    ok = all(sum(n[a] * s[a] for a in tree.ancestors(v, inclusive=True)) <= xi for v in range(tree.n))
    assert admissible(m, n) is ok


def test_model_rejects_bad_demand(line2):
    with pytest.raises(ValueError):
        _model(line2, 2, [1, 3], [1.0, 1.0])


# blocking -----------------------------------------------------------------------

def test_single_node_is_erlang_b():
    rep = blocking_probabilities(_model(CodebookTree.line(1), 2, [1], [1.0]))
    assert rep.normalization == pytest.approx(2.5, rel=1e-14)
    assert rep.p[0] == pytest.approx(0.2, rel=1e-13)


def test_line_reference():
    rep = blocking_probabilities(_line_model())
    assert rep.normalization == pytest.approx(5.0, rel=1e-14)
    np.testing.assert_allclose(rep.p, [0.4, 0.4], rtol=1e-13)
    assert rep.method == "recursion"


def test_vanishing_load_never_blocks(fixture_tree):
    rep = blocking_probabilities(_model(fixture_tree, 1, np.ones(10, dtype=int), np.full(10, 1e-9)))
    assert rep.p.max() < 1e-8


@pytest.mark.parametrize("servers, load", [(1, 0.5), (5, 3.0), (30, 25.0), (100, 80.0)])
def test_erlang_b(servers, load):
    rep = blocking_probabilities(_model(CodebookTree.line(1), servers, [1], [load]))
    assert rep.p[0] == pytest.approx(erlang_b(servers, load), rel=1e-12)


@pytest.mark.parametrize("make", [
    _line_model,
    lambda: _model(CodebookTree.line(1), 2, [1], [1.0]),
    lambda: _model(reference_tree(), 1, np.ones(10, dtype=int), np.full(10, 0.01)),
])
def test_enumeration_agrees_on_reference_cases(make):
    m = make()
    a, b = blocking_probabilities(m), blocking_enumeration(m)
    np.testing.assert_allclose(a.p, b.p, rtol=1e-12)
    assert a.log_normalization == pytest.approx(b.log_normalization, rel=1e-12)


@given(trees(max_nodes=6), st.data())
def test_alg_agrees_with_enumeration(tree, data):
    xi = data.draw(st.integers(1, 6))
    s = data.draw(st.lists(st.integers(1, xi), min_size=tree.n, max_size=tree.n))
    rho = data.draw(st.lists(st.floats(0.0, 4.0), min_size=tree.n, max_size=tree.n))
    m = _model(tree, xi, s, rho)
    a, b = blocking_probabilities(m), blocking_enumeration(m)
    np.testing.assert_allclose(a.p, b.p, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(a.accepted_fraction, 1 - a.p, atol=1e-12)


def test_fixture_heavy_load_is_finite():
    tree = reference_tree()
    t = reference_traffic().scaled(8.0)
    rep = blocking_probabilities(StreamingModel(tree, 10, np.array([1, 2, 2, 2, 4, 4, 4, 4, 4, 4]), t))
    assert np.all(np.isfinite(rep.p)) and np.all((rep.p >= 0) & (rep.p <= 1))


@given(trees(max_nodes=6), st.data())
def test_parent_blocks_at_least_as_often_as_child(tree, data):
    # a state that blocks a child leaves no room on some path below the parent
    xi = data.draw(st.integers(1, 6))
    s = data.draw(st.lists(st.integers(1, xi), min_size=tree.n, max_size=tree.n))
    rho = data.draw(st.lists(st.floats(0.0, 4.0), min_size=tree.n, max_size=tree.n))
    m = _model(tree, xi, s, rho)
    s_arr = np.asarray(s)
    p = blocking_probabilities(m).p
    for v in range(1, tree.n):
        if s_arr[v] <= s_arr[tree.parent[v]]:
            assert p[v] <= p[tree.parent[v]] + 1e-12


# stationary distribution ----------------------------------------------------------

def test_empty_state_probability():
    m = _line_model()
    assert streaming_stationary_prob(m, [0, 0]) == pytest.approx(0.2, rel=1e-14)
    assert streaming_stationary_prob(m, [1, 1]) == pytest.approx(0.2, rel=1e-14)


def test_inadmissible_state_rejected():
    with pytest.raises(Inadmissible):
        streaming_stationary_prob(_line_model(), [0, 3])


@given(trees(max_nodes=5), st.data())
def test_distribution_sums_to_one(tree, data):
    xi = data.draw(st.integers(1, 4))
    s = data.draw(st.lists(st.integers(1, xi), min_size=tree.n, max_size=tree.n))
    rho = data.draw(st.lists(st.floats(0.05, 3.0), min_size=tree.n, max_size=tree.n))
    m = _model(tree, xi, s, rho)
    total = math.fsum(streaming_stationary_prob(m, n) for n in enumerate_states(m))
    assert total == pytest.approx(1.0, rel=1e-10)


@given(trees(max_nodes=5), st.data())
def test_detailed_balance(tree, data):
    # pi(n) lambda_v = pi(n + e_v) n_v+1 r_v for admissible n + e_v
    xi = data.draw(st.integers(1, 4))
    s = data.draw(st.lists(st.integers(1, xi), min_size=tree.n, max_size=tree.n))
    rho = np.array(data.draw(st.lists(st.floats(0.05, 3.0), min_size=tree.n, max_size=tree.n)))
    r = np.array(data.draw(st.lists(st.floats(0.5, 2.0), min_size=tree.n, max_size=tree.n)))
    m = _model(tree, xi, s, rho, r)
    states = enumerate_states(m)
    n = states[data.draw(st.integers(0, len(states) - 1))]
    for v in range(tree.n):
        up = n.copy()
        up[v] += 1
        if admissible(m, up):
            lhs = streaming_stationary_prob(m, n) * m.traffic.lam[v]
            rhs = streaming_stationary_prob(m, up) * up[v] * r[v]
            assert lhs == pytest.approx(rhs, rel=1e-10)


def test_enumeration_limit():
    m = _model(reference_tree(), 50, np.ones(10, dtype=int), np.ones(10))
    with pytest.raises(TooLarge):
        enumerate_states(m, limit=1000)


def test_ops_grow_with_size_times_height():
    costs = []
    for height in (2, 4, 6):
        tree = CodebookTree.regular(2, height)
        rep = blocking_probabilities(_model(tree, 8, np.ones(tree.n, dtype=int), np.full(tree.n, 0.3)))
        costs.append(rep.ops / (tree.n * (height + 1)))
    assert max(costs) / min(costs) < 1.5
