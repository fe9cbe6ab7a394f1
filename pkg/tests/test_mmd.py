"""MMD penalty against a double-loop oracle, plus its edge cases."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caem import tensor as T
from caem.errors import DimensionMismatch, TooFewSamples
from caem.gradcheck import grad_check
from caem.mmd import MmdConfig, draw_target, gaussian_kernel, median_bandwidth, mmd_penalty
from caem.tensor import Tensor


def mmd_oracle(x, y, sigma):
    """Biased MMD^2 with explicit loops over every pair."""
    def k(a, b):
        return math.exp(-sum((ai - bi) ** 2 for ai, bi in zip(a, b)) / (2 * sigma * sigma))
    kxx = sum(k(a, b) for a in x for b in x) / (len(x) * len(x))
    kyy = sum(k(a, b) for a in y for b in y) / (len(y) * len(y))
    kxy = sum(k(a, b) for a in x for b in y) / (len(x) * len(y))
    return kxx + kyy - 2 * kxy


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.3, 3.0))
def test_matches_double_loop_oracle(seed, sigma):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((8, 3)), rng.standard_normal((8, 3))
    got = mmd_penalty(Tensor(x), MmdConfig(sigma), target=y).item()
    assert abs(got - mmd_oracle(x.tolist(), y.tolist(), sigma)) <= 1e-12


def test_median_bandwidth_matches_oracle():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal((8, 3)), rng.standard_normal((8, 3))
    pts = np.vstack([x, y])
    dists = [np.linalg.norm(pts[i] - pts[j]) for i in range(16) for j in range(i + 1, 16)]
    sigma = float(np.median(dists))
    assert median_bandwidth(x, y) == sigma
    got = mmd_penalty(Tensor(x), MmdConfig("median"), target=y).item()
    assert abs(got - mmd_oracle(x.tolist(), y.tolist(), sigma)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_set_against_itself_is_exactly_zero(count, dim, seed):
    x = np.random.default_rng(seed).standard_normal((count, dim))
    assert mmd_penalty(Tensor(x), MmdConfig("median"), target=x.copy()).item() == 0.0
    assert mmd_penalty(Tensor(x), MmdConfig(0.7), target=x.copy()).item() == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_nonnegative_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((6, 2)), rng.standard_normal((6, 2)) + 1.0
    a = mmd_penalty(Tensor(x), MmdConfig(1.0), target=y).item()
    b = mmd_penalty(Tensor(y), MmdConfig(1.0), target=x).item()
    assert a >= -1e-15
    assert abs(a - b) <= 1e-14


def test_grows_with_distribution_shift():
    rng = np.random.default_rng(0)
    target = rng.standard_normal((64, 2))
    values = [mmd_penalty(Tensor(rng.standard_normal((64, 2)) + s), MmdConfig(1.0), target=target).item()
              for s in (0.0, 1.0, 3.0)]
    assert values[0] < values[1] < values[2]


@pytest.mark.parametrize("bandwidth", [1.0, "median"])
def test_gradient_matches_finite_differences(bandwidth):
    rng = np.random.default_rng(1)
    target = rng.standard_normal((8, 3))
    x0 = rng.standard_normal((8, 3))
    cfg = MmdConfig(bandwidth if bandwidth != "median" else median_bandwidth(x0, target))
    res = grad_check(lambda x: mmd_penalty(x, cfg, target=target), x0, step=1e-5, tol=1e-4)
    assert res.passed, res.max_rel_error


def test_median_bandwidth_is_constant_for_gradients():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((5, 2)), requires_grad=True)
    target = rng.standard_normal((5, 2))
    T.backward(mmd_penalty(x, MmdConfig("median"), target=target))
    g_median = x.grad.copy()
    x.zero_grad()
    T.backward(mmd_penalty(x, MmdConfig(median_bandwidth(x.data, target)), target=target))
    np.testing.assert_array_equal(g_median, x.grad)


def test_target_draw_is_seeded():
    np.testing.assert_array_equal(draw_target(4, 3, 7), draw_target(4, 3, 7))
    a = mmd_penalty(Tensor(np.ones((4, 3))), seed=5).item()
    assert a == mmd_penalty(Tensor(np.ones((4, 3))), seed=5).item()


def test_degenerate_bandwidth_falls_back_to_one():
    x = np.zeros((3, 2))
    assert median_bandwidth(x, x) == 1.0


def test_kernel_values():
    assert gaussian_kernel([0, 0], [0, 0], 1.0) == 1.0
    assert gaussian_kernel([1.0], [0.0], 1.0) == pytest.approx(math.exp(-0.5), rel=1e-15)
    with pytest.raises(DimensionMismatch):
        gaussian_kernel([1.0], [0.0, 1.0], 1.0)


def test_errors():
    with pytest.raises(TooFewSamples):
        mmd_penalty(Tensor(np.ones((1, 3))))
    with pytest.raises(DimensionMismatch):
        mmd_penalty(Tensor(np.ones((4, 3))), target=np.ones((4, 2)))
    with pytest.raises(ValueError):
        MmdConfig(-1.0)
    with pytest.raises(ValueError):
        MmdConfig("mean")
