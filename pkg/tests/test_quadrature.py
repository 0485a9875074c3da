import numpy as np
import pytest

from micropolar_lab.quadrature import (
    batched_box_rule,
    gauss_interval,
    graded_time_rule,
    tensor_box_rule,
    trapezoid_weights,
)


@pytest.mark.parametrize("order", [1, 2, 4, 8])
def test_gauss_exact_to_degree(order):
    x, w = gauss_interval(-0.5, 2.0, order)
    for deg in range(2 * order):
        exact = (2.0 ** (deg + 1) - (-0.5) ** (deg + 1)) / (deg + 1)
        assert np.sum(w * x ** deg) == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_box_rule_volume_and_moment():
    lo, hi = np.array([0.0, -1.0, 2.0]), np.array([1.0, 3.0, 2.5])
    x, w = tensor_box_rule(lo, hi, 3)
    assert np.sum(w) == pytest.approx(1.0 * 4.0 * 0.5)
    assert np.sum(w * x[0] ** 2 * x[1] * x[2] ** 3) == pytest.approx((1 / 3) * 4.0 * ((2.5 ** 4 - 2 ** 4) / 4))


def test_batched_matches_single():
    lo = np.array([[0.0, 1.0], [0.0, -1.0], [0.0, 0.5]])
    hi = lo + np.array([[1.0, 0.5], [2.0, 0.5], [0.5, 0.5]])
    xb, wb = batched_box_rule(lo, hi, 3)
    for b in range(2):
        x, w = tensor_box_rule(lo[:, b], hi[:, b], 3)
        np.testing.assert_allclose(xb[:, b], x, rtol=0, atol=1e-15)
        np.testing.assert_allclose(wb[b], w, rtol=1e-15)


@pytest.mark.parametrize("scale", [1e-4, 1e-2, 1.0])
def test_graded_rule_resolves_fast_decay(scale):
    t = 0.3
    x, w = graded_time_rule(t, scale, order=6)
    exact = scale * (1.0 - np.exp(-t / scale))
    assert np.sum(w * np.exp(-x / scale)) == pytest.approx(exact, rel=1e-8)


def test_trapezoid_weights():
    times = np.array([0.0, 0.1, 0.3, 0.6])
    w = trapezoid_weights(times)
    assert np.sum(w) == pytest.approx(0.6)
    assert np.sum(w * (2 * times + 1)) == pytest.approx(0.36 + 0.6)
