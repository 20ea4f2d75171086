import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grplq import (
    DesignError,
    GroupedDesign,
    PenaltySpec,
    active_set,
    conjugate,
    format_q,
    group_norm,
    objective,
    parse_q,
    penalty_value,
    standardize,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
q_values = st.sampled_from([1.0, 1.5, 2.0, 3.0, 7.0, math.inf])


@pytest.mark.parametrize(
    "text, value", [("1", 1.0), ("2", 2.0), ("inf", math.inf), ("1.5", 1.5), (" INF ", math.inf), (3, 3.0)]
)
def test_parse_q_accepts_literals(text, value):
    assert parse_q(text) == value


@pytest.mark.parametrize("bad", ["0.5", "abc", "nan", -1, 0.99])
def test_parse_q_rejects(bad):
    with pytest.raises(ValueError):
        parse_q(bad)


def test_format_q_round_trips():
    for q in [1.0, 2.0, math.inf, 1.5, 3.25]:
        assert parse_q(format_q(q)) == q
    assert format_q(math.inf) == "inf"


def test_conjugate_pairs():
    assert conjugate(1.0) == math.inf
    assert conjugate(math.inf) == 1.0
    assert conjugate(2.0) == 2.0
    assert conjugate(3.0) == pytest.approx(1.5)
    assert 1 / 3.0 + 1 / conjugate(3.0) == pytest.approx(1.0)


def test_group_norm_examples():
    assert group_norm([3, 4], 2.0) == 5.0
    assert group_norm([3, -4], math.inf) == 4.0
    assert group_norm([1, 1, 1], 3.0) == pytest.approx(3 ** (1 / 3), rel=1e-15)
    assert group_norm([], 2.0) == 0.0


@given(arrays(float, st.integers(1, 6), elements=finite), q_values)
def test_group_norm_matches_numpy(v, q):
    # exact power-of-two rescaling keeps numpy's reference free of under/overflow
    top = np.abs(v).max()
    shift = 0 if top == 0 else -int(np.frexp(top)[1])
    expected = np.ldexp(np.linalg.norm(np.ldexp(v, shift), ord=q), -shift)
    assert group_norm(v, q) == pytest.approx(expected, rel=1e-12, abs=1e-300)


def test_group_norm_no_overflow_for_general_q():
    v = np.array([1e300, 1e300])
    assert group_norm(v, 3.0) == pytest.approx(1e300 * 2 ** (1 / 3))


def test_penalty_weights_by_q():
    sizes = [1, 4, 9]
    np.testing.assert_array_equal(PenaltySpec(1).weights(sizes), [1, 1, 1])
    np.testing.assert_array_equal(PenaltySpec(math.inf).weights(sizes), [1, 4, 9])
    np.testing.assert_allclose(PenaltySpec(2).weights(sizes), [1, 2, 3])


@pytest.mark.parametrize("lam", [-0.1, math.inf, math.nan])
def test_penalty_spec_rejects_bad_lambda(lam):
    with pytest.raises(ValueError):
        PenaltySpec(2, lam)


def test_standardize_examples():
    ones = np.ones((4, 1))
    d = standardize(ones, [1])
    np.testing.assert_array_equal(d.X, ones)
    spike = np.array([[2.0], [0], [0], [0]])
    d = standardize(spike, [1])
    col = d.X[:, 0]
    assert np.sum(col**2) / 4 == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(col, [2.0, 0, 0, 0])


def test_standardize_contract(rng):
    X = rng.standard_normal((17, 7)) * rng.uniform(0.1, 50, size=7)
    d = standardize(X, [3, 4])
    assert d.is_standardized()
    np.testing.assert_allclose(np.sum(d.X**2, axis=0) / 17, 1.0, atol=1e-12)
    np.testing.assert_allclose(d.X, X * d.scale)
    beta = rng.standard_normal(7)
    np.testing.assert_allclose(X @ d.to_original(beta), d.X @ beta)


def test_standardize_rejects_zero_column():
    X = np.ones((5, 3))
    X[:, 1] = 0
    with pytest.raises(DesignError, match="column 1"):
        standardize(X, [3])


def test_standardize_centering(rng):
    X = rng.standard_normal((10, 3)) + 5
    d = standardize(X, [1, 2], center=True)
    np.testing.assert_allclose(d.X.mean(axis=0), 0, atol=1e-14)
    assert d.center is not None


@pytest.mark.parametrize(
    "groups", [[2, 2], [[0, 1], [3, 4]], [[1, 0], [2, 3, 4]], [0, 5], []]
)
def test_partition_errors(groups):
    with pytest.raises(DesignError):
        GroupedDesign(np.ones((3, 5)), groups)


def test_partition_from_index_lists():
    d = GroupedDesign(np.ones((3, 5)), [[0, 1], [2, 3, 4]])
    assert d.sizes == (2, 3)
    assert d.p == 2 and d.m == 5 and d.n == 3 and d.d_bar == 3
    np.testing.assert_array_equal(d.columns([1]), [2, 3, 4])


def test_design_is_read_only(rng):
    d = GroupedDesign(rng.standard_normal((3, 2)), [2])
    with pytest.raises(ValueError):
        d.X[0, 0] = 1.0


def test_penalty_examples():
    d = GroupedDesign(np.ones((2, 4)), [4])
    assert penalty_value(np.zeros(4), PenaltySpec(2), d) == 0.0
    assert penalty_value(np.ones(4), PenaltySpec(2), d) == pytest.approx(4.0)
    d2 = GroupedDesign(np.ones((2, 6)), [1, 2, 3])
    beta = np.array([1.0, -2, 3, -4, 5, -6])
    assert penalty_value(beta, PenaltySpec(1), d2) == pytest.approx(np.abs(beta).sum())


@given(st.data())
def test_penalty_properties(data):
    sizes = data.draw(st.lists(st.integers(1, 4), min_size=1, max_size=5))
    m = sum(sizes)
    d = GroupedDesign(np.ones((1, m)), sizes)
    spec = PenaltySpec(data.draw(q_values))
    a = data.draw(arrays(float, m, elements=finite))
    b = data.draw(arrays(float, m, elements=finite))
    c = data.draw(finite)
    pa, pb = penalty_value(a, spec, d), penalty_value(b, spec, d)
    assert penalty_value(a + b, spec, d) <= pa + pb + 1e-9 * (1 + pa + pb)
    assert penalty_value(c * a, spec, d) == pytest.approx(abs(c) * pa, rel=1e-12, abs=1e-12)
    assert (pa == 0.0) == (not np.any(a))


@given(arrays(float, st.integers(1, 6), elements=finite))
def test_singleton_penalty_same_for_all_q(beta):
    d = GroupedDesign(np.ones((1, beta.size)), [1] * beta.size)
    vals = [penalty_value(beta, PenaltySpec(q), d) for q in (1, 1.5, 2, 3, math.inf)]
    np.testing.assert_allclose(vals, vals[0], rtol=1e-12)


def test_objective_examples(rng):
    X = rng.standard_normal((12, 4))
    d = GroupedDesign(X, [2, 2])
    y = rng.standard_normal(12)
    assert objective(d, y, np.zeros(4), PenaltySpec(2, 1.0)) == pytest.approx(y @ y / 24)
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    rss = float(np.sum((y - X @ ols) ** 2))
    assert objective(d, y, ols, PenaltySpec(2, 0.0)) == pytest.approx(rss / 24, rel=1e-12)
    beta = rng.standard_normal(4)
    assert objective(d, X @ beta, beta, PenaltySpec(2, 0.0)) == pytest.approx(0.0, abs=1e-28)


@given(st.data())
def test_objective_convex(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    X = rng.standard_normal((8, 5))
    d = GroupedDesign(X, [2, 3])
    y = rng.standard_normal(8)
    spec = PenaltySpec(data.draw(q_values), data.draw(st.floats(0, 5)))
    b1, b2 = rng.standard_normal(5) * 3, rng.standard_normal(5) * 3
    t = data.draw(st.floats(0, 1))
    lhs = objective(d, y, t * b1 + (1 - t) * b2, spec)
    rhs = t * objective(d, y, b1, spec) + (1 - t) * objective(d, y, b2, spec)
    assert lhs <= rhs + 1e-10


def test_active_set_recomputed():
    d = GroupedDesign(np.ones((2, 5)), [2, 1, 2])
    beta = np.array([0.0, 0, 1e-300, 0, -2])
    assert active_set(d, beta) == [1, 2]
    assert active_set(d, beta, tol=1e-6) == [2]
    beta[2] = 0
    assert active_set(d, beta) == [2]


def test_check_beta_shape():
    d = GroupedDesign(np.ones((2, 3)), [3])
    with pytest.raises(DesignError):
        d.check_beta(np.zeros(4))
