"""Dyadic partition of unity and (Fourier-)Besov / Chemin-Lerner norms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientSamplingError,
    InvalidParameterError,
    InvalidRangeError,
    InvalidScaleError,
    ResolutionError,
    UndefinedRatioError,
    UnsupportedRepresentationError,
)
from .fields import SpectralField
from .quadrature import trapezoid_weights

INNER = 0.75
OUTER = 4.0 / 3.0


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def theta(x):
    """Radial profile: 1 on [0, 3/4], 0 on [4/3, inf), quintic in between."""
    x = np.abs(np.asarray(x, dtype=float))
    return 1.0 - smoothstep((x - INNER) / (OUTER - INNER))


@dataclass(frozen=True)
class DyadicPartition:
    j_min: int
    j_max: int

    @property
    def scales(self):
        return np.arange(self.j_min, self.j_max + 1)

    def psi(self, abs_xi, j):
        """Block multiplier psi(2^-j xi) as a function of |xi|."""
        x = np.asarray(abs_xi, dtype=float) * 2.0 ** (-j)
        return theta(0.5 * x) - theta(x)

    def phi(self, abs_xi):
        return theta(abs_xi)

    def annulus(self, j):
        return INNER * 2.0 ** j, 2.0 * OUTER * 2.0 ** j

    def block_sum(self, abs_xi):
        return sum(self.psi(abs_xi, j) for j in self.scales)

    def resolved_band(self):
        """|xi| range on which the truncated blocks sum to exactly one."""
        return 2.0 ** self.j_min * OUTER, 2.0 ** self.j_max * INNER

    def check_scale(self, j):
        if not (self.j_min <= j <= self.j_max):
            raise InvalidScaleError(f"block {j} outside partition range [{self.j_min}, {self.j_max}]")

    @classmethod
    def covering(cls, lo, hi):
        """Smallest partition whose blocks sum to one on lo <= |xi| <= hi."""
        j_min = int(np.floor(np.log2(lo / OUTER)))
        j_max = int(np.ceil(np.log2(hi / INNER)))
        return make_partition(j_min, max(j_max, j_min + 1))


def make_partition(j_min, j_max):
    j_min, j_max = int(j_min), int(j_max)
    if j_min >= j_max:
        raise InvalidRangeError(f"need j_min < j_max, got {j_min} >= {j_max}")
    return DyadicPartition(j_min, j_max)


def apply_block(f: SpectralField, j, part: DyadicPartition) -> SpectralField:
    part.check_scale(j)
    w = part.psi(f.abs_points(), j)
    return f.with_values(f.values * w)


def _check_exponent(name, v):
    if not (v >= 1.0):
        raise InvalidParameterError(f"{name} must lie in [1, inf], got {v}")


def _lp(vals, weights, p):
    if vals.size == 0:
        return 0.0
    if np.isinf(p):
        return float(np.max(vals))
    if p == 1:
        return float(np.sum(vals * weights))
    return float(np.sum(vals ** p * weights) ** (1.0 / p))


def block_norms_raw(mag, abs_xi, weights, p, part: DyadicPartition):
    """||psi_j F||_{L^p} for every block, from a pointwise magnitude array."""
    mag = np.asarray(mag, dtype=float).ravel()
    abs_xi = np.asarray(abs_xi, dtype=float).ravel()
    w = np.broadcast_to(np.asarray(weights, dtype=float), mag.shape).ravel() if np.ndim(weights) else weights
    live = mag > 0
    mag, abs_xi = mag[live], abs_xi[live]
    if np.ndim(w):
        w = w[live]
    out = np.zeros(len(part.scales))
    for i, j in enumerate(part.scales):
        lo, hi = part.annulus(j)
        sel = (abs_xi > lo) & (abs_xi < hi)
        if not np.any(sel):
            continue
        vals = part.psi(abs_xi[sel], j) * mag[sel]
        out[i] = _lp(vals, w[sel] if np.ndim(w) else w, p)
    return out


def block_norms(f: SpectralField, p, part: DyadicPartition):
    return block_norms_raw(f.magnitude(), f.abs_points(), f.weights(), p, part)


def combine_blocks(norms, s, r, part: DyadicPartition):
    """(sum_j (2^{js} n_j)^r)^{1/r}, or the sup for r = inf."""
    scaled = 2.0 ** (s * part.scales.astype(float)) * np.asarray(norms)
    if np.isinf(r):
        return float(np.max(scaled)) if scaled.size else 0.0
    return float(np.sum(scaled ** r) ** (1.0 / r))


def fb_norm(f: SpectralField, s, p, r, part: DyadicPartition):
    """Homogeneous Fourier-Besov norm ||f||_{FB^s_{p,r}}."""
    _check_exponent("p", p)
    _check_exponent("r", r)
    if f.values.size == 0:
        return 0.0
    return combine_blocks(block_norms(f, p, part), s, r, part)


def besov_norm(f: SpectralField, s, p, r, part: DyadicPartition):
    """Homogeneous Besov norm with L^p measured on the physical periodic grid."""
    _check_exponent("p", p)
    _check_exponent("r", r)
    if not f.is_lattice:
        raise UnsupportedRepresentationError("Besov norms need a lattice field")
    grid = f.grid
    cell = np.prod([L / n for n, L in zip(grid.n, grid.lengths)])
    absxi = grid.abs_xi
    norms = np.zeros(len(part.scales))
    for i, j in enumerate(part.scales):
        w = part.psi(absxi, j)
        if not np.any(w * f.magnitude()):
            continue
        mag2 = np.zeros(grid.shape)
        for c in range(6):
            phys = grid.to_physical(w * f.values[c])
            mag2 += phys.real ** 2 + phys.imag ** 2
        norms[i] = _lp(np.sqrt(mag2), cell, p)
    return combine_blocks(norms, s, r, part)


def time_norm(values, weights, lam):
    values = np.asarray(values, dtype=float)
    if np.isinf(lam):
        return np.max(values, axis=0)
    return np.sum(np.asarray(weights)[:, None] * values ** lam, axis=0) ** (1.0 / lam)


def _time_weights(times, weights, lam, T):
    times = np.asarray(times, dtype=float)
    if T is not None and times.size and times[-1] > T * (1 + 1e-12):
        raise InvalidParameterError("trajectory samples extend past T")
    if np.any(np.diff(times) <= 0):
        raise InvalidParameterError("sample times must increase strictly")
    if weights is None:
        if not np.isinf(lam) and len(times) < 2:
            raise InsufficientSamplingError("need at least two time samples for a time integral")
        weights = trapezoid_weights(times)
    elif len(weights) != len(times):
        raise InvalidParameterError("one time weight per sample required")
    return np.asarray(weights, dtype=float)


def block_history(states, p, part):
    """Per-time block norms, shape (M, J)."""
    return np.array([block_norms(f, p, part) for f in states])


def chemin_lerner_from_history(hist, weights, lam, s, r, part):
    return combine_blocks(time_norm(hist, weights, lam), s, r, part)


def chemin_lerner_norm(states, times, lam, s, p, r, part: DyadicPartition, T=None, weights=None):
    """Norm in L~^lam(0, T; FB^s_{p,r}): time integral inside the block sum.

    ``weights`` is the time quadrature rule matching ``times``; the trapezoid rule
    on the sample times is used when omitted.
    """
    _check_exponent("p", p)
    _check_exponent("r", r)
    if not (lam >= 1):
        raise InvalidParameterError(f"time exponent must lie in [1, inf], got {lam}")
    w = _time_weights(times, weights, lam, T)
    if len(states) != len(w):
        raise InvalidParameterError("one state per time sample required")
    return chemin_lerner_from_history(block_history(states, p, part), w, lam, s, r, part)


def _support_extent(values, grid):
    live = np.any(values != 0, axis=0)
    ext = []
    for a, k in enumerate(grid.index_axes):
        axes = tuple(b for b in range(3) if b != a)
        hit = np.any(live, axis=axes)
        ext.append(int(np.max(np.abs(k[hit]))) if np.any(hit) else 0)
    return ext


def lattice_outer_product(f: SpectralField, g: SpectralField):
    """Transforms of all 36 products f_a g_b on the lattice (alias-free check included)."""
    if not (f.is_lattice and g.is_lattice):
        raise UnsupportedRepresentationError("products need lattice fields")
    grid = f.grid
    ef, eg = _support_extent(f.values, grid), _support_extent(g.values, grid)
    for a in range(3):
        if ef[a] + eg[a] > grid.n[a] // 2 - 1:
            raise ResolutionError("product spectrum would alias on this lattice")
    pf = grid.to_physical(f.values)
    pg = grid.to_physical(g.values)
    prod = pf[:, None] * pg[None, :]
    return grid.to_spectral(prod.reshape((36,) + grid.shape))


def product_law_ratio(f_states, g_states, times, alpha, part, r=2.0, weights=None):
    """||fg||_{L~^1 FB^0_{1,r}} over the cross sum of X^alpha component norms."""
    if not (0 < alpha < 1):
        raise InvalidParameterError("alpha must lie in (0, 1)")
    if len(f_states) != len(g_states):
        raise InvalidParameterError("trajectories must share their time sampling")
    w = _time_weights(times, weights, 1.0, None)
    hist = []
    for f, g in zip(f_states, g_states):
        prod = lattice_outer_product(f, g)
        mag = np.sqrt(np.sum(prod.real ** 2 + prod.imag ** 2, axis=0))
        hist.append(block_norms_raw(mag, f.grid.abs_xi, f.grid.cell_volume, 1.0, part))
    num = chemin_lerner_from_history(np.array(hist), w, 1.0, 0.0, r, part)
    lp, lm = 2.0 / (1.0 + alpha), 2.0 / (1.0 - alpha)
    hf, hg = block_history(f_states, 1.0, part), block_history(g_states, 1.0, part)
    fa = chemin_lerner_from_history(hf, w, lp, alpha, r, part)
    fm = chemin_lerner_from_history(hf, w, lm, -alpha, r, part)
    ga = chemin_lerner_from_history(hg, w, lp, alpha, r, part)
    gm = chemin_lerner_from_history(hg, w, lm, -alpha, r, part)
    den = fa * gm + ga * fm
    if den == 0.0:
        raise UndefinedRatioError("product-law denominator vanishes")
    return num / den
