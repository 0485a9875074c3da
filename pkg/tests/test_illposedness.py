import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import micropolar_lab.illposedness as ip
from micropolar_lab.errors import (
    AccuracyError,
    DegenerateRangeError,
    InvalidParameterError,
    InvalidTimeError,
    PerturbativeRegimeWarning,
    ResolutionError,
)
from micropolar_lab.fields import LatticeGrid
from micropolar_lab.illposedness import (
    J_TERMS,
    K_TERMS,
    IllposedDatum,
    ObservationRegion,
    build_initial_data,
    check_lattice_resolution,
    data_norm,
    data_norm_scaling,
    grid_cross_check,
    inflation_experiment,
    j1_kernel,
    k11_kernel,
    kernel_sign_check,
    second_iterate,
)

from conftest import philox


def ref_theta(x):
    t = np.clip((np.abs(x) - 0.75) / (4.0 / 3.0 - 0.75), 0.0, 1.0)
    return 1.0 - (6 * t ** 5 - 15 * t ** 4 + 10 * t ** 3)


def ref_data(N, delta, xi):
    """Closed-form data at frequencies xi (3, M) strictly inside the cubes."""
    mod = np.linalg.norm(xi, axis=0)
    weight = np.zeros(xi.shape[1])
    for j in range(N, 3 * N // 2 + 2):
        for s in (1, -1):
            inside = np.all(np.abs(xi - np.array([[0.0], [s * 2.0 ** j], [0.0]])) < 1.0, axis=0)
            weight += 2.0 ** j * inside
    c = 1j * delta / math.sqrt(N) * weight / mod
    return np.stack([c * xi[1], -c * xi[0], 0 * c, c * xi[1], 0 * c, 0 * c])


# data


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_value_at_cube_centre(N):
    datum = IllposedDatum(N, 0.05)
    v = datum.values(np.array([[0.0], [2.0 ** N], [0.0]]))[:, 0]
    a = 1j * 0.05 * 2.0 ** N / math.sqrt(N)
    np.testing.assert_allclose(v, [a, 0, 0, a, 0, 0], rtol=1e-15)


@given(N=st.integers(2, 6), delta=st.floats(1e-3, 0.99))
def test_data_invariants(N, delta):
    datum, f = build_initial_data(N, delta, order=3)
    assert f.divergence_residual() <= 1e-10
    assert f.hermitian_residual() <= 1e-12
    np.testing.assert_allclose(f.values, ref_data(N, delta, f.cubes.nodes), rtol=1e-14)
    assert datum.j_range[0] == N and datum.j_range[-1] == 3 * N // 2 + 1


@pytest.mark.parametrize("N", [1, 0, 2.5])
def test_degenerate_data_range(N):
    with pytest.raises(DegenerateRangeError):
        build_initial_data(N, 0.05)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1])
def test_data_amplitude_range(delta):
    with pytest.raises(InvalidParameterError):
        build_initial_data(3, delta)


def test_data_norm_against_direct_quadrature():
    N, delta = 3, 0.05
    x, w = np.polynomial.legendre.leggauss(12)
    total = np.zeros(20)
    js = np.arange(-2, 18)
    for j in range(N, 3 * N // 2 + 2):
        for s in (1.0, -1.0):
            X, Y, Z = np.meshgrid(x, x + s * 2.0 ** j, x, indexing="ij")
            W = w[:, None, None] * w[None, :, None] * w[None, None, :]
            r = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
            mag = delta / math.sqrt(N) * 2.0 ** j * np.sqrt(X ** 2 + 2 * Y ** 2) / r
            for i, k in enumerate(js):
                x_k = r * 2.0 ** (-k)
                total[i] += np.sum(W * mag * (ref_theta(x_k / 2) - ref_theta(x_k)))
    oracle = math.sqrt(np.sum((2.0 ** (-js) * total) ** 2))
    assert data_norm(N, delta, 2.0) == pytest.approx(oracle, rel=1e-6)


@pytest.mark.parametrize("r,slope", [(4.0, -0.25), (math.inf, -0.5)])
def test_data_norm_slopes(r, slope):
    fitted, norms = data_norm_scaling([4, 6, 8, 10, 12], 0.05, r)
    assert abs(fitted - slope) <= 0.1
    assert np.all(norms > 0)


def test_data_norm_scaling_needs_four_points():
    with pytest.raises(InvalidParameterError):
        data_norm_scaling([3, 4, 5], 0.05, 2.0)


# observation region


def test_region_properties():
    E = ObservationRegion()
    assert E.min_transverse() >= 0.038
    assert np.linalg.norm([E.hi] * 3) <= 1.0
    pts = philox(4).uniform(E.lo, E.hi, (3, 1000))
    assert np.all(E.contains(pts)) and np.all(E.in_closure(pts))
    assert np.all(1 - pts[0] ** 2 / np.sum(pts ** 2, axis=0) >= E.min_transverse() - 1e-15)
    part = ip.DyadicPartition(-E.j0(), E.j0())
    lo, hi = E.radii
    assert np.max(np.abs(part.block_sum(np.linspace(lo, hi, 101)) - 1.0)) < 1e-12


# kernels


def test_kernels_at_symmetric_point():
    a = np.array([[0.0], [2.0], [0.0]])
    b = np.array([[0.0], [-3.0], [0.0]])
    assert j1_kernel(a, b)[0] == -1.0
    assert k11_kernel(a, b)[0] == -2.0


@pytest.mark.parametrize("j", [2, 3, 5])
def test_kernel_bounds(j):
    rng = philox(j)
    lo, hi = kernel_sign_check("J1", j, 100_000, rng=rng)
    assert lo >= -1 - 1e-9 and hi <= -1 / 16 + 1e-9
    lo, hi = kernel_sign_check("K11", j, 100_000, rng=rng)
    assert lo >= -2 - 1e-9 and hi <= -1 / 256 + 1e-9


def test_unknown_kernel():
    with pytest.raises(InvalidParameterError):
        kernel_sign_check("J9", 2, 10)


# second iterate


@pytest.fixture(scope="module")
def iterate3():
    datum, _ = build_initial_data(3, 0.05, order=4)
    xi, w = ObservationRegion().rule(3)
    return datum, xi, w, second_iterate(datum, datum.t_N, xi)


def test_iterate_at_time_zero():
    datum, _ = build_initial_data(3, 0.05, order=4)
    res = second_iterate(datum, 0.0, np.array([[0.2], [0.3], [0.4]]))
    assert not np.any(res.value)
    assert all(not np.any(v) for v in res.signed.values())


def test_iterate_negative_time():
    datum, _ = build_initial_data(3, 0.05, order=4)
    with pytest.raises(InvalidTimeError):
        second_iterate(datum, -1e-3, np.array([[0.2], [0.3], [0.4]]))


def test_terms_sum_to_value(iterate3):
    _, _, _, res = iterate3
    scale = np.max(np.abs(res.value))
    assert np.max(np.abs(sum(res.signed[k] for k in J_TERMS) - res.value[0])) <= 1e-10 * scale
    assert np.max(np.abs(sum(res.signed[k] for k in K_TERMS) - res.value[3])) <= 1e-10 * scale


def test_iterate_is_quadratic_in_amplitude(iterate3):
    datum, xi, _, res = iterate3
    half, _ = build_initial_data(3, 0.025, order=4)
    np.testing.assert_allclose(second_iterate(half, half.t_N, xi).value, 0.25 * res.value, rtol=1e-12, atol=1e-25)


def test_leading_term_dominates(iterate3):
    _, _, w, res = iterate3
    J1 = np.sum(w * np.abs(res.signed["J1"]))
    rest = sum(np.sum(w * np.abs(res.signed[k])) for k in J_TERMS[1:])
    assert rest < J1


def test_accuracy_guard(monkeypatch):
    datum, _ = build_initial_data(3, 0.05, order=4)
    real = ip._evaluate

    def noisy(d, t, xi, order, time_order):
        value, *rest = real(d, t, xi, order, time_order)
        return (value * (1.05 if order < d.order else 1.0), *rest)

    monkeypatch.setattr(ip, "_evaluate", noisy)
    with pytest.raises(AccuracyError):
        second_iterate(datum, datum.t_N, np.array([[0.2], [0.3], [0.4]]))


# inflation experiment


def test_large_amplitude_warns():
    with pytest.warns(PerturbativeRegimeWarning):
        inflation_experiment(2, 0.2)


def test_unknown_space():
    with pytest.raises(InvalidParameterError):
        inflation_experiment(3, 0.05, space="sobolev")


def test_besov_mode_checks_signs():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = inflation_experiment(3, 0.05, space="besov_infty")
    signs = rep.checks["nonnegativity"]
    assert signs["J1_kernel_max"] < 0 and signs["K11_kernel_max"] < 0
    assert signs["J1_min_aligned"] >= 0 and signs["K11_min_aligned"] >= 0
    assert rep.passed["leading_nonnegative"]
    fb = inflation_experiment(3, 0.05)
    assert rep.norms["data"] == pytest.approx((2 * math.pi) ** -3 * fb.norms["data"], rel=1e-12)


# lattice cross-check


def test_cross_check_rejects_large_N():
    with pytest.raises(ResolutionError):
        grid_cross_check(5)


def test_small_lattice_is_rejected():
    with pytest.raises(ResolutionError):
        check_lattice_resolution(LatticeGrid.cubic(32, 16.0), 2)


def test_cross_check_independent_of_amplitude():
    a = grid_cross_check(2, 0.05, steps=4)
    b = grid_cross_check(2, 0.025, steps=4)
    assert a.deviation == pytest.approx(b.deviation, rel=1e-9)
