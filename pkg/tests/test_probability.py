import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from atv_stereo.costvol import SENTINEL_COST, CostVolume, HypothesisVolume
from atv_stereo.errors import InputError
from atv_stereo.probability import (
    ProbabilityVolume,
    estimate,
    expect_depth,
    regularize_cost,
    softmax_probability,
    variance_depth,
)


def cv(costs):
    costs = np.asarray(costs, dtype=np.float64)
    return CostVolume(costs, np.full(costs.shape, 3, dtype=np.uint8))


def hv(depths):
    return HypothesisVolume(np.asarray(depths, dtype=np.float64), "adaptive", 2)


def brute_moments(p, L):
    """Per-pixel expectation and variance by explicit Python loops."""
    D, H, W = p.shape
    mean = np.zeros((H, W))
    var = np.zeros((H, W))
    for y in range(H):
        for x in range(W):
            m = math.fsum(p[j, y, x] * L[j, y, x] for j in range(D))
            mean[y, x] = m
            var[y, x] = math.fsum(p[j, y, x] * (L[j, y, x] - m) ** 2 for j in range(D))
    return mean, var


# -- regularization ---------------------------------------------------------


def test_zero_radius_is_identity():
    c = cv(np.random.default_rng(0).uniform(size=(3, 5, 6)))
    out = regularize_cost(c, 0)
    np.testing.assert_array_equal(out.costs, c.costs)
    assert out.costs is not c.costs


@pytest.mark.parametrize("radius", [1, 2, 5])
def test_constant_slice_unchanged(radius):
    c = cv(np.full((2, 7, 9), 0.37))
    np.testing.assert_allclose(regularize_cost(c, radius).costs, 0.37, rtol=1e-15)


def test_impulse_spreads_to_three_by_three():
    costs = np.zeros((1, 7, 7))
    costs[0, 3, 3] = 9.0
    out = regularize_cost(cv(costs), 1).costs[0]
    expected = np.zeros((7, 7))
    expected[2:5, 2:5] = 1.0
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_sentinel_cells_excluded_and_kept():
    costs = np.ones((1, 5, 5))
    costs[0, 2, 2] = SENTINEL_COST
    costs[0, 0, 0] = 4.0
    c = cv(costs)
    c.valid_views[0, 2, 2] = 1
    out = regularize_cost(c, 1).costs[0]
    assert out[2, 2] == SENTINEL_COST
    # the sentinel neighbor does not leak into the average
    assert out[2, 1] == pytest.approx(1.0)
    assert out[0, 0] == pytest.approx(7.0 / 4)


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (6, 6), elements=st.floats(0, 10)), st.integers(1, 3))
def test_interior_bump_keeps_slice_mean(bump, radius):
    # bump cells sit 2*radius from the border, so every window touching them
    # is full and the filter redistributes their mass without losing any
    pad = 2 * radius
    slice_ = np.full((6 + 2 * pad, 6 + 2 * pad), 2.0)
    slice_[pad:-pad, pad:-pad] += bump
    out = regularize_cost(cv(slice_[None]), radius).costs[0]
    assert abs(out.mean() - slice_.mean()) < 1e-9


# -- softmax ----------------------------------------------------------------


def test_equal_costs_give_uniform():
    p = softmax_probability(cv(np.full((5, 3, 4), 2.5)), 10.0).probs
    np.testing.assert_allclose(p, 0.2, rtol=1e-15)


def test_two_plane_closed_form():
    beta = 10.0
    p = softmax_probability(cv(np.array([0.0, math.log(3) / beta]).reshape(2, 1, 1)), beta).probs
    np.testing.assert_allclose(p[:, 0, 0], [0.75, 0.25], rtol=1e-12)


def test_large_beta_is_one_hot():
    costs = np.random.default_rng(1).permutation(np.arange(6.0)).reshape(6, 1, 1) * 0.1
    p = softmax_probability(cv(costs), 1e6).probs[:, 0, 0]
    onehot = np.zeros(6)
    onehot[np.argmin(costs[:, 0, 0])] = 1.0
    np.testing.assert_allclose(p, onehot, atol=1e-9)


def test_sentinel_costs_do_not_overflow():
    costs = np.array([0.3, SENTINEL_COST, 0.1]).reshape(3, 1, 1)
    p = softmax_probability(cv(costs), 10.0).probs
    assert np.isfinite(p).all() and p[1, 0, 0] < 1e-300 + 1e-12


def test_nonpositive_beta_rejected():
    with pytest.raises(InputError):
        softmax_probability(cv(np.zeros((2, 1, 1))), 0.0)


@settings(max_examples=50, deadline=None)
@given(
    hnp.arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 4), st.integers(1, 4)),
               elements=st.floats(0, 50)),
    st.floats(1e-3, 1e3),
)
def test_softmax_normalized_and_argmax_is_argmin(costs, beta):
    p = softmax_probability(cv(costs), beta).probs
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-6)
    # ties may split the maximum; the argmin plane always carries it
    best = np.take_along_axis(p, costs.argmin(axis=0)[None], axis=0)[0]
    np.testing.assert_array_equal(best, p.max(axis=0))


# -- moments ------------------------------------------------------------------


def test_delta_recovers_plane_and_zero_variance():
    L = np.sort(np.random.default_rng(2).uniform(1, 5, size=(4, 2, 3)), axis=0)
    p = np.zeros_like(L)
    p[2] = 1.0
    est = estimate(ProbabilityVolume(p), hv(L))
    np.testing.assert_array_equal(est.depth, L[2])
    np.testing.assert_array_equal(est.sigma, 0.0)


def test_uniform_pair_expectation_and_symmetric_variance():
    L = np.array([1.0, 3.0]).reshape(2, 1, 1)
    p = np.full((2, 1, 1), 0.5)
    assert expect_depth(ProbabilityVolume(p), hv(L))[0, 0] == 2.0
    assert variance_depth(ProbabilityVolume(p), hv(L), np.full((1, 1), 2.0))[0, 0] == 1.0


def test_random_distributions_match_brute_force():
    rng = np.random.default_rng(3)
    L = np.sort(rng.uniform(1, 10, size=(8, 5, 5)), axis=0)
    p = rng.dirichlet(np.ones(8), size=(5, 5)).transpose(2, 0, 1)
    depth = expect_depth(ProbabilityVolume(p), hv(L))
    var = variance_depth(ProbabilityVolume(p), hv(L), depth)
    mean_o, var_o = brute_moments(p, L)
    np.testing.assert_allclose(depth, mean_o, rtol=0, atol=1e-12)
    np.testing.assert_allclose(var, var_o, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_expectation_in_span_and_variance_under_popoviciu(seed, D):
    rng = np.random.default_rng(seed)
    L = np.sort(rng.uniform(0.5, 20, size=(D, 3, 3)), axis=0)
    p = rng.dirichlet(np.full(D, 0.3), size=(3, 3)).transpose(2, 0, 1)
    est = estimate(ProbabilityVolume(p), hv(L))
    assert (est.depth >= L.min(axis=0)).all() and (est.depth <= L.max(axis=0)).all()
    assert (est.sigma >= 0).all()
    assert (est.sigma**2 <= (L.max(axis=0) - L.min(axis=0)) ** 2 / 4 * (1 + 1e-12) + 1e-15).all()


def test_shape_mismatch_rejected():
    p = ProbabilityVolume(np.full((2, 2, 2), 0.5))
    with pytest.raises(InputError):
        expect_depth(p, hv(np.ones((3, 2, 2))))
    with pytest.raises(InputError):
        variance_depth(p, hv(np.ones((2, 2, 2))), np.ones((3, 3)))
