import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from micropolar_lab.calibration import random_field
from micropolar_lab.errors import (
    InsufficientSamplingError,
    InvalidParameterError,
    InvalidRangeError,
    InvalidScaleError,
    UndefinedRatioError,
    UnsupportedRepresentationError,
)
from micropolar_lab.fields import CubeSet, LatticeGrid, SpectralField
from micropolar_lab.littlewood_paley import (
    apply_block,
    besov_norm,
    chemin_lerner_norm,
    fb_norm,
    make_partition,
    product_law_ratio,
)

from conftest import philox

CONV = (2.0 * math.pi) ** -3


def ref_theta(x):
    t = np.clip((np.abs(x) - 0.75) / (4.0 / 3.0 - 0.75), 0.0, 1.0)
    return 1.0 - (6 * t ** 5 - 15 * t ** 4 + 10 * t ** 3)


def ref_psi(abs_xi, j):
    x = abs_xi * 2.0 ** (-j)
    return ref_theta(x / 2.0) - ref_theta(x)


def scalar_cube(center, order=8, side=2.0):
    cubes = CubeSet([center], [[side / 2] * 3], order)
    vals = np.zeros((6, cubes.nodes.shape[1]), dtype=complex)
    vals[0] = 1.0
    return SpectralField(vals, cubes=cubes)


def lattice_shell(grid, lo, hi):
    vals = np.zeros((6,) + grid.shape, dtype=complex)
    r = grid.abs_xi
    vals[0] = np.where((r >= lo) & (r <= hi), 1.0 + np.cos(r), 0.0)
    return SpectralField(vals, grid=grid)


# partition


def test_partition_sums_to_one_at_unit_radius():
    part = make_partition(-4, 10)
    assert part.block_sum(1.0) == pytest.approx(1.0, abs=1e-10)


def test_block_vanishes_outside_annulus():
    assert make_partition(-4, 10).psi(2.0 ** 5 * 3, 5) == 0.0


def test_far_blocks_are_disjoint():
    part = make_partition(-4, 10)
    r = 10.0 ** philox(0).uniform(-2, 2, 10_000)
    assert np.all(part.psi(r, 0) * part.psi(r, 3) == 0.0)


@pytest.mark.parametrize("lo,hi", [(3, 3), (4, 2)])
def test_empty_partition_range(lo, hi):
    with pytest.raises(InvalidRangeError):
        make_partition(lo, hi)


def test_profile_matches_reference():
    part = make_partition(-4, 10)
    r = np.linspace(0, 100, 5001)
    for j in (-2, 0, 3, 5):
        np.testing.assert_allclose(part.psi(r, j), ref_psi(r, j), atol=1e-13)


@given(st.floats(-3.0, 6.0))
def test_telescoping_on_resolved_band(log2r):
    part = make_partition(-4, 10)
    lo, hi = part.resolved_band()
    r = np.clip(2.0 ** log2r, lo, hi)
    assert abs(part.block_sum(r) - 1.0) <= 1e-10


@given(st.floats(-8.0, 9.0))
def test_low_pass_completes_the_sum(log2r):
    part = make_partition(-4, 10)
    r = 2.0 ** log2r
    assert abs(part.phi(r) + sum(part.psi(r, j) for j in range(0, 14)) - 1.0) <= 1e-10


# blocks


def test_block_keeps_cube_in_its_annulus():
    part = make_partition(-4, 10)
    f = scalar_cube([0.0, 32.0, 0.0])
    assert np.any(apply_block(f, 5, part).values != 0)
    assert not np.any(apply_block(f, 8, part).values)


def test_double_block_is_psi_squared():
    part = make_partition(-4, 10)
    f = scalar_cube([0.0, 40.0, 3.0])
    twice = apply_block(apply_block(f, 5, part), 5, part)
    expect = ref_psi(f.abs_points(), 5) ** 2
    np.testing.assert_allclose(twice.values[0].real, expect, atol=1e-14)


def test_block_out_of_range():
    with pytest.raises(InvalidScaleError):
        apply_block(scalar_cube([0.0, 32.0, 0.0]), 11, make_partition(-4, 10))


# Fourier-Besov norms


def test_zero_field_has_zero_norm(grid8):
    part = make_partition(-2, 4)
    assert fb_norm(SpectralField.zeros_like_grid(grid8), -1.0, 1.0, 2.0, part) == 0.0


@pytest.mark.parametrize("p,r", [(0.5, 2.0), (1.0, -1.0)])
def test_bad_exponents(grid8, p, r):
    with pytest.raises(InvalidParameterError):
        fb_norm(SpectralField.zeros_like_grid(grid8), -1.0, p, r, make_partition(-2, 4))


def test_cube_norm_against_direct_quadrature():
    part = make_partition(-4, 10)
    value = fb_norm(scalar_cube([0.0, 32.0, 0.0]), -1.0, 1.0, 1.0, part)
    x, w = np.polynomial.legendre.leggauss(24)
    X, Y, Z = np.meshgrid(x, x + 32.0, x, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    r = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
    oracle = sum(2.0 ** (-j) * np.sum(W * ref_psi(r, j)) for j in range(-4, 11))
    assert 0.25 <= value <= 0.5
    assert value == pytest.approx(oracle, rel=1e-6)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_dyadic_dilation(k):
    part = make_partition(-2, 14)
    f = scalar_cube([0.0, 32.0, 5.0])
    f.values[0] = np.cos(f.cubes.nodes[2])
    g = SpectralField(f.values * 2.0 ** (-3 * k), cubes=f.cubes.scaled(2.0 ** k))
    ratio = fb_norm(g, -1.0, 1.0, 2.0, part) / fb_norm(f, -1.0, 1.0, 2.0, part)
    assert ratio == pytest.approx(2.0 ** (-k), rel=1e-6)


@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(-5.0, 5.0).filter(lambda v: v == 0 or abs(v) > 1e-100), s=st.floats(-2.0, 2.0), r=st.sampled_from([1.0, 2.0, 3.5, math.inf]))
def test_norm_is_homogeneous(grid16, seed, c, s, r):
    part = make_partition(-1, 4)
    f = random_field(grid16, philox(seed), 3)
    assert fb_norm(f.scaled(c), s, 1.0, r, part) == pytest.approx(abs(c) * fb_norm(f, s, 1.0, r, part), rel=1e-12, abs=1e-300)


@given(seed=st.integers(0, 2 ** 32 - 1), p=st.sampled_from([1.0, 2.0, math.inf]), r=st.sampled_from([1.0, 2.0, math.inf]))
def test_triangle_inequality(grid16, seed, p, r):
    part = make_partition(-1, 4)
    rng = philox(seed)
    f, g = random_field(grid16, rng, 3), random_field(grid16, rng, 2).scaled(rng.uniform(-3, 3))
    assert fb_norm(f + g, -1.0, p, r, part) <= fb_norm(f, -1.0, p, r, part) + fb_norm(g, -1.0, p, r, part) + 1e-12


@given(seed=st.integers(0, 2 ** 32 - 1), r=st.lists(st.sampled_from([1.0, 1.5, 2.0, 4.0, math.inf]), min_size=2, max_size=2))
def test_summability_monotone(grid16, seed, r):
    part = make_partition(-1, 4)
    f = random_field(grid16, philox(seed), 3)
    r1, r2 = sorted(r)
    assert fb_norm(f, 0.5, 1.0, r1, part) >= fb_norm(f, 0.5, 1.0, r2, part) * (1 - 1e-12)


# Besov norms


def test_besov_needs_lattice():
    with pytest.raises(UnsupportedRepresentationError):
        besov_norm(scalar_cube([0.0, 32.0, 0.0]), -1.0, math.inf, 2.0, make_partition(-4, 10))


def test_besov_zero(grid8):
    assert besov_norm(SpectralField.zeros_like_grid(grid8), -1.0, math.inf, 2.0, make_partition(-2, 3)) == 0.0


def test_single_annulus_sup_norm_is_l1_of_transform(grid16):
    part = make_partition(-1, 4)
    f = lattice_shell(grid16, 2.0, 3.5)
    besov = besov_norm(f, 0.0, math.inf, 1.0, part)
    assert besov == pytest.approx(CONV * fb_norm(f, 0.0, 1.0, 1.0, part), rel=1e-12)


@pytest.mark.parametrize("r", [1.0, 2.0, math.inf])
def test_besov_embedding_on_seeded_fields(grid16, r):
    part = make_partition(-1, 4)
    for seed in range(100):
        f = random_field(grid16, philox(seed), 1 + seed % 4)
        assert besov_norm(f, -1.0, math.inf, r, part) <= CONV * fb_norm(f, -1.0, 1.0, r, part) + 1e-8


# Chemin-Lerner norms


def test_constant_trajectory(smooth_field):
    part = make_partition(-1, 4)
    times = np.linspace(0.0, 2.0, 5)
    states = [smooth_field] * 5
    ref = fb_norm(smooth_field, -1.0, 1.0, 2.0, part)
    assert chemin_lerner_norm(states, times, math.inf, -1.0, 1.0, 2.0, part) == pytest.approx(ref, rel=1e-14)
    assert chemin_lerner_norm(states, times, 1.0, -1.0, 1.0, 2.0, part, T=2.0) == pytest.approx(2.0 * ref, rel=1e-12)


def test_single_sample_time_integral(smooth_field):
    with pytest.raises(InsufficientSamplingError):
        chemin_lerner_norm([smooth_field], [0.0], 2.0, -1.0, 1.0, 2.0, make_partition(-1, 4))


@pytest.mark.parametrize("lam", [1.0, 2.0])
def test_heat_trajectory_against_closed_form(grid16, lam):
    part = make_partition(-1, 4)
    g = lattice_shell(grid16, 2.0, 3.5)
    T = 0.5
    x, w = np.polynomial.legendre.leggauss(40)
    times, weights = 0.5 * T * (x + 1.0), 0.5 * T * w
    k2 = grid16.abs_xi ** 2
    states = [g.with_values(g.values * np.exp(-t * k2)) for t in times]
    got = chemin_lerner_norm(states, times, lam, 0.0, 1.0, 1.0, part, T=T, weights=weights)
    oracle = 0.0
    live = g.values[0] != 0
    a, kk = g.values[0].real[live] * grid16.cell_volume, k2[live]
    for j in part.scales:
        c = a * ref_psi(np.sqrt(kk), j)
        if lam == 1.0:
            oracle += np.sum(c * (1 - np.exp(-T * kk)) / kk)
        else:
            s = kk[:, None] + kk[None, :]
            oracle += np.sqrt(np.sum(np.outer(c, c) * (1 - np.exp(-T * s)) / s))
    assert got == pytest.approx(oracle, rel=1e-9)


# product law


def test_zero_product_is_undefined(grid16):
    z = SpectralField.zeros_like_grid(grid16)
    with pytest.raises(UndefinedRatioError):
        product_law_ratio([z, z], [z, z], [0.0, 0.1], 0.5, make_partition(-1, 4))


def test_heat_single_annulus_product_ratio():
    grid = LatticeGrid.cubic(32, 16.0)
    part = make_partition(-1, 5)
    g = lattice_shell(grid, 2.0, 3.5)
    times = np.linspace(0.0, 0.25, 17)
    states = [g.with_values(g.values * np.exp(-t * grid.abs_xi ** 2)) for t in times]
    ratio = product_law_ratio(states, states, times, 0.5, part)
    assert math.isfinite(ratio) and ratio > 0


def test_corpus_product_law_within_recorded_constant(corpus):
    cal, ratios = corpus
    assert max(ratios["product"]) <= cal["product_law"] * 1.01
