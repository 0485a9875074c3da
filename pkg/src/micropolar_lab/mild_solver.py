"""Mild solutions of the micropolar system on a frequency lattice.

The solution is written U = sum_n A_n with A_1 = G(t) f and, for n >= 2,
A_n = -sum_{n1+n2=n} int_0^t G(t - tau) F(A_n1, A_n2)(tau) dtau, where
F(U, V) = (P div(u (x) v), div(u (x) w_V)).  With this sign the truncated sums
A_1 + ... + A_n approximate U directly.

Time integration uses second-order exponential differencing: the linear part
is propagated exactly through the spectral projectors of the symbol, and the
flux is interpolated linearly in time across each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    BlowUpSuspectedError,
    InvalidParameterError,
    InvalidTimeError,
    StepTooLargeError,
    TimeResolutionError,
    UnsupportedRepresentationError,
)
from .fields import LatticeGrid, SpectralField, expand_half_spectrum
from .littlewood_paley import (
    DyadicPartition,
    block_norms,
    chemin_lerner_from_history,
    fb_norm,
)
from .quadrature import graded_time_rule, trapezoid_weights
from .semigroup import SpectralBasis, apply_function


@dataclass(frozen=True)
class SolverConfig:
    grid: LatticeGrid
    dt: float
    T: float
    alpha: float = 0.5
    r: float = 2.0
    picard_depth: int = 3
    dealias_fraction: float = 2.0 / 3.0
    nonlinear: bool = True
    reject_fraction: float = 0.2
    max_halvings: int = 3
    partition: DyadicPartition | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if not self.T >= 0:
            raise InvalidParameterError(f"T must be nonnegative, got {self.T}")
        if not 0 < self.alpha < 1:
            raise InvalidParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.dealias_fraction <= 1:
            raise InvalidParameterError("dealias_fraction must lie in (0, 1]")
        if not self.r >= 1:
            raise InvalidParameterError("r must lie in [1, inf]")
        if int(self.picard_depth) < 1:
            raise InvalidParameterError("picard_depth must be >= 1")

    @property
    def part(self):
        if self.partition is not None:
            return self.partition
        g = self.grid
        return DyadicPartition.covering(min(g.h), float(np.sqrt(np.sum(np.square(g.xi_max)))))


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    @property
    def final(self):
        return self.states[-1]

    def time_weights(self):
        return trapezoid_weights(self.times)

    def x_alpha_norm(self, alpha, r, part):
        return x_alpha_norm(self.states, self.times, alpha, r, part)


# ---------------------------------------------------------------------------
# projection and flux
# ---------------------------------------------------------------------------


def leray_project(f: SpectralField) -> SpectralField:
    """Remove the gradient part of the velocity; the zero mode is set to 0."""
    xi = f.points()
    u = f.values[:3]
    k2 = np.sum(xi ** 2, axis=0)
    zero = k2 == 0.0
    dot = (xi[0] * u[0] + xi[1] * u[1] + xi[2] * u[2]) / np.where(zero, 1.0, k2)
    out = f.values.copy()
    out[:3] = u - xi * dot
    if np.any(zero):
        out[:3, zero] = 0.0
    return f.with_values(out, divergence_free=True)


def _require_lattice(f, cfg):
    if not f.is_lattice:
        raise UnsupportedRepresentationError("the flux needs a lattice field")
    if f.grid != cfg.grid:
        raise InvalidParameterError("field and solver use different lattices")


def _project_half(values, xi):
    u = values[:3]
    k2 = np.sum(xi ** 2, axis=0)
    zero = k2 == 0.0
    dot = (xi[0] * u[0] + xi[1] * u[1] + xi[2] * u[2]) / np.where(zero, 1.0, k2)
    values[:3] = u - xi * dot
    values[:3, zero] = 0.0


@lru_cache(maxsize=4)
def _half_mask(grid, fraction):
    return grid.half(grid.dealias_mask(fraction))


def _flux_half(grid, hU, hV, fraction, same=False):
    """Half-spectrum flux of two real fields given by their half spectra."""
    hmask = _half_mask(grid, fraction)
    hxi = _basis(grid, True).xi
    uw = grid.from_half_spectrum(hU * hmask)
    u = uw[:3]
    vv = uw if same else grid.from_half_spectrum(hV * hmask)
    acc = np.zeros(hU.shape, dtype=complex)
    for l in range(6):
        for k in range(3):
            if same and l < 3 and k > l:
                continue  # u_k u_l is symmetric; reuse the transform taken at (l, k)
            prod = grid.to_half_spectrum(u[k] * vv[l])
            acc[l] += (1j * hxi[k]) * prod
            if same and l < 3 and k < l:
                acc[k] += (1j * hxi[l]) * prod
    acc *= hmask
    _project_half(acc, hxi)
    return acc


def bilinear_flux(U: SpectralField, V: SpectralField, cfg: SolverConfig) -> SpectralField:
    """Transform of (P div(u_U (x) u_V), div(u_U (x) w_V)), dealiased."""
    _require_lattice(U, cfg)
    _require_lattice(V, cfg)
    grid = cfg.grid
    real = U.real_valued and V.real_valued
    if real:
        acc = _flux_half(grid, grid.half(U.values), grid.half(V.values), cfg.dealias_fraction, V is U)
        out = expand_half_spectrum(acc, grid.n)
    else:
        mask = grid.dealias_mask(cfg.dealias_fraction)
        u = grid.to_physical(U.values[:3] * mask)
        vv = grid.to_physical(V.values * mask)
        xi = grid.xi
        out = np.zeros((6,) + grid.shape, dtype=complex)
        for k in range(3):
            out += (1j * xi[k]) * grid.to_spectral(u[k] * vv)
        out *= mask
        _project_half(out, xi)
    return SpectralField(out, grid=grid, real_valued=real, divergence_free=True)


def nonlinear_flux(U: SpectralField, cfg: SolverConfig) -> SpectralField:
    if not cfg.nonlinear:
        _require_lattice(U, cfg)
        return U.with_values(np.zeros_like(U.values), divergence_free=True)
    return bilinear_flux(U, U, cfg)


# ---------------------------------------------------------------------------
# exponential differencing coefficients
# ---------------------------------------------------------------------------


def phi1(z):
    """(e^z - 1)/z with the removable singularity filled."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(zs) / zs)


def phi2(z):
    """(e^z - 1 - z)/z^2, Taylor series near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    series = 0.5 + z * (1 / 6 + z * (1 / 24 + z * (1 / 120 + z / 720)))
    return np.where(small, series, (np.expm1(zs) - zs) / zs ** 2)


@lru_cache(maxsize=4)
def _basis(grid: LatticeGrid, half: bool) -> SpectralBasis:
    return SpectralBasis(grid.half(grid.xi) if half else grid.xi)


@lru_cache(maxsize=2)
def _step_mixings(grid: LatticeGrid, h: float, half: bool = False):
    """Mixings of e^{-hA}, h phi1(-hA) and h phi2(-hA) on the lattice."""
    B = _basis(grid, half)
    z = -h * B.lam
    return B.mixing(np.exp(z)), B.mixing(h * phi1(z)), B.mixing(h * phi2(z))


def propagate(f: SpectralField, t) -> SpectralField:
    """Exact linear evolution e^{-tA} f."""
    if t < 0:
        raise InvalidTimeError("propagation time must be nonnegative")
    return f.with_values(apply_function(f.points(), f.values, lambda lam: np.exp(-t * lam)))


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def _relative_block_change(a: SpectralField, b: SpectralField, part):
    na = block_norms(a, 1.0, part) * 2.0 ** (-part.scales.astype(float))
    nb = block_norms(b, 1.0, part) * 2.0 ** (-part.scales.astype(float))
    top = max(float(np.max(na)), float(np.max(nb)))
    if top == 0.0:
        return None, 0.0
    live = np.maximum(na, nb) > 1e-8 * top
    change = np.zeros_like(na)
    change[live] = np.abs(nb[live] - na[live]) / np.maximum(na[live], 1e-300)
    worst = int(np.argmax(change))
    return int(part.scales[worst]), float(change[worst])


def duhamel_step(U: SpectralField, t, dt, cfg: SolverConfig, flux_now=None) -> SpectralField:
    """Advance U from t to t + dt.

    Predictor a = e^{-dt A} U - dt phi1 F(U); corrector
    U+ = a - dt phi2 (F(a) - F(U)).  Raises StepTooLargeError when the
    corrector moves any dyadic block norm by more than ``cfg.reject_fraction``.
    """
    _require_lattice(U, cfg)
    if not dt > 0:
        raise InvalidTimeError("time step must be positive")
    if dt > cfg.dt * (1 + 1e-12):
        raise InvalidTimeError(f"step {dt} exceeds configured dt {cfg.dt}")
    B = _basis(cfg.grid, False)
    E, P1, P2 = _step_mixings(cfg.grid, float(dt))
    lin = B.apply(U.values, E)
    if not cfg.nonlinear:
        return U.with_values(lin)
    F0 = nonlinear_flux(U, cfg) if flux_now is None else flux_now
    pred = U.with_values(lin - B.apply(F0.values, P1, divergence_free=True))
    F1 = nonlinear_flux(pred, cfg)
    new = pred.with_values(pred.values - B.apply(F1.values - F0.values, P2, divergence_free=True))
    block, change = _relative_block_change(pred, new, cfg.part)
    if change > cfg.reject_fraction:
        raise StepTooLargeError(
            f"corrector changed block {block} by {100 * change:.1f}% at t={t:.6g}",
            block=block,
            change=change,
        )
    return new


def _advance(U, t, h, cfg, depth):
    try:
        return duhamel_step(U, t, h, cfg)
    except StepTooLargeError:
        if depth >= cfg.max_halvings:
            raise
        mid = _advance(U, t, 0.5 * h, cfg, depth + 1)
        return _advance(mid, t + 0.5 * h, 0.5 * h, cfg, depth + 1)


def uniform_times(T, dt):
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return np.linspace(0.0, T, steps + 1)


def _diagnose(diag, f, cfg):
    diag["divergence_residual"].append(f.divergence_residual())
    diag["hermitian_residual"].append(f.hermitian_residual() if f.real_valued else 0.0)
    diag["fb_norm"].append(fb_norm(f, -1.0, 1.0, cfg.r, cfg.part))


def solve_mild(U0: SpectralField, cfg: SolverConfig) -> Trajectory:
    """March the mild formulation from 0 to cfg.T, storing every dt."""
    _require_lattice(U0, cfg)
    if not U0.real_valued:
        raise InvalidParameterError("initial data must be flagged real-valued")
    if U0.divergence_residual() > 1e-8:
        raise InvalidParameterError("initial velocity is not divergence-free")
    times = uniform_times(cfg.T, cfg.dt) if cfg.T > 0 else np.zeros(1)
    diag = {"divergence_residual": [], "hermitian_residual": [], "fb_norm": []}
    states = [U0.with_values(U0.values.copy(), divergence_free=True)]
    _diagnose(diag, states[0], cfg)
    for k in range(len(times) - 1):
        h = times[k + 1] - times[k]
        try:
            nxt = _advance(states[-1], times[k], h, cfg, 0)
        except StepTooLargeError as exc:
            partial = Trajectory(times[: len(states)].copy(), states, diag)
            raise BlowUpSuspectedError(
                f"step at t={times[k]:.6g} rejected after {cfg.max_halvings} halvings: {exc}",
                partial=partial,
            ) from exc
        states.append(nxt)
        _diagnose(diag, nxt, cfg)
    return Trajectory(times, states, diag)


def linear_trajectory(U0: SpectralField, times):
    return [propagate(U0, float(t)) for t in times]


# ---------------------------------------------------------------------------
# Duhamel integrals and Picard expansion
# ---------------------------------------------------------------------------


def duhamel_integral(fluxes, times, cfg: SolverConfig):
    """I(t_k) = int_0^{t_k} G(t_k - tau) F(tau) dtau for flux samples F(t_k).

    The flux is interpolated linearly between samples and the semigroup is
    integrated exactly against that interpolant.
    """
    grid = cfg.grid
    B = _basis(grid, False)
    out = [fluxes[0].with_values(np.zeros_like(fluxes[0].values))]
    cur = out[0].values
    for k in range(len(times) - 1):
        E, P1, P2 = _step_mixings(grid, float(times[k + 1] - times[k]))
        f0, f1 = fluxes[k].values, fluxes[k + 1].values
        cur = B.apply_sum([(cur, E), (f0, P1 - P2), (f1, P2)])
        out.append(fluxes[k + 1].with_values(cur))
    return out


def bilinear_operator(U1_states, U2_states, times, cfg: SolverConfig):
    """B(U1, U2)(t) = int_0^t G(t - tau) F(U1, U2)(tau) dtau along a time grid."""
    fluxes = [bilinear_flux(a, b, cfg) for a, b in zip(U1_states, U2_states)]
    return duhamel_integral(fluxes, times, cfg)


def picard_terms(f: SpectralField, t, n_max, cfg: SolverConfig, times=None):
    """[A_1(f)(t), ..., A_n_max(f)(t)] on a shared time grid.

    All orders are marched together so only the current and next time level
    are held in memory.  ``times`` overrides the uniform grid of step cfg.dt.
    """
    _require_lattice(f, cfg)
    if int(n_max) < 1:
        raise InvalidParameterError("n_max must be >= 1")
    if t < 0:
        raise InvalidTimeError("t must be nonnegative")
    n_max = int(n_max)
    if times is None:
        times = uniform_times(t, cfg.dt) if t > 0 else np.zeros(1)
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or abs(times[-1] - t) > 1e-12 * max(1.0, t):
        raise InvalidParameterError("time grid must run from 0 to t")
    grid = cfg.grid
    half = f.real_valued
    B = _basis(grid, half)
    if half:

        def flux(a, b):
            return _flux_half(grid, a, b, cfg.dealias_fraction, a is b)

        start = grid.half(f.values).copy()
    else:

        def flux(a, b):
            return bilinear_flux(f.with_values(a), f.with_values(b), cfg).values

        start = f.values.copy()
    terms = [start] + [np.zeros_like(start) for _ in range(n_max - 1)]

    def order_flux(terms, n):
        """sum_{n1+n2=n} F(A_n1, A_n2); terms[k] holds A_{k+1}."""
        total = None
        for n1 in range(1, n):
            fl = flux(terms[n1 - 1], terms[n - n1 - 1])
            total = fl if total is None else total + fl
        return total

    fluxes = [None, None] + [order_flux(terms, n) for n in range(2, n_max + 1)]
    for k in range(len(times) - 1):
        E, P1, P2 = _step_mixings(grid, float(times[k + 1] - times[k]), half)
        new_terms = [B.apply(terms[0], E, f.divergence_free)]
        new_fluxes = [None, None]
        for n in range(2, n_max + 1):
            fn_new = order_flux(new_terms + terms[len(new_terms):], n)
            vals = B.apply_sum(
                [(terms[n - 1], E), (fluxes[n], P2 - P1), (fn_new, -P2)], divergence_free=True
            )
            new_terms.append(vals)
            new_fluxes.append(fn_new)
        terms, fluxes = new_terms, new_fluxes
    out = []
    for n, vals in enumerate(terms):
        full = expand_half_spectrum(vals, grid.n) if half else vals
        out.append(f.with_values(full, divergence_free=f.divergence_free or n > 0))
    return out


# ---------------------------------------------------------------------------
# X^alpha_T norms, Picard iteration, local existence time
# ---------------------------------------------------------------------------


def x_alpha_norm(states, times, alpha, r, part, weights=None):
    """||U||_{L~^{2/(1+a)} FB^a_{1,r}} + ||U||_{L~^{2/(1-a)} FB^{-a}_{1,r}}."""
    if weights is None:
        weights = trapezoid_weights(times)
    hist = np.array([block_norms(f, 1.0, part) for f in states])
    lp, lm = 2.0 / (1.0 + alpha), 2.0 / (1.0 - alpha)
    return chemin_lerner_from_history(hist, weights, lp, alpha, r, part) + chemin_lerner_from_history(
        hist, weights, lm, -alpha, r, part
    )


def linear_x_alpha_norm(U0: SpectralField, T, alpha, r, part, order=8):
    """||G(t) U0||_{X^alpha_T} with a time rule graded towards t = 0."""
    if T <= 0:
        return 0.0
    mag = U0.magnitude()
    if not np.any(mag):
        return 0.0
    kmax2 = float(np.max(U0.abs_points()[mag > 0])) ** 2
    times, weights = graded_time_rule(T, 1.0 / (2.0 * kmax2), order=order, max_doublings=60)
    states = linear_trajectory(U0, times)
    return x_alpha_norm(states, times, alpha, r, part, weights=weights)


@dataclass
class PicardResult:
    states: list
    times: np.ndarray
    differences: list
    ratios: list
    converged: bool

    def x_alpha_norm(self, alpha, r, part):
        return x_alpha_norm(self.states, self.times, alpha, r, part)


def picard_iteration(U0: SpectralField, cfg: SolverConfig, times=None, max_iter=25, tol=1e-12):
    """Fixed-point iteration U <- G U0 - B(U, U) in X^alpha on a time grid."""
    if times is None:
        times = uniform_times(cfg.T, cfg.dt)
    times = np.asarray(times, dtype=float)
    part = cfg.part
    lin = linear_trajectory(U0, times)
    cur = lin
    diffs, ratios = [], []
    converged = False
    for _ in range(max_iter):
        Bu = bilinear_operator(cur, cur, times, cfg)
        nxt = [a - b for a, b in zip(lin, Bu)]
        d = x_alpha_norm([a - b for a, b in zip(nxt, cur)], times, cfg.alpha, cfg.r, part)
        if diffs and diffs[-1] > 0:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        cur = nxt
        scale = x_alpha_norm(cur, times, cfg.alpha, cfg.r, part)
        if d <= tol * max(scale, 1e-300):
            converged = True
            break
    return PicardResult(cur, times, diffs, ratios, converged)


def find_local_existence_time(U0: SpectralField, cfg: SolverConfig, c1, iterations=40):
    """Largest T (by bisection) with ||G(t)U0||_{X^alpha_T} < 1/(4 c1).

    Returns (T_loc, contraction ratio of the Picard iteration on [0, T_loc]).
    """
    threshold = 1.0 / (4.0 * c1)
    part = cfg.part

    def size(T):
        return linear_x_alpha_norm(U0, T, cfg.alpha, cfg.r, part)

    if not np.any(U0.values):
        return cfg.T, 0.0
    if size(cfg.T) < threshold:
        T_loc = cfg.T
    else:
        if size(cfg.dt) >= threshold:
            raise TimeResolutionError("smallness fails already at the first time step")
        lo, hi = math.log(cfg.dt), math.log(cfg.T)
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if size(math.exp(mid)) < threshold:
                lo = mid
            else:
                hi = mid
        T_loc = math.exp(lo)
    steps = max(16, int(math.ceil(T_loc / cfg.dt)))
    res = picard_iteration(U0, cfg, times=np.linspace(0.0, T_loc, steps + 1), max_iter=8)
    ratio = max(res.ratios) if res.ratios else 0.0
    return T_loc, ratio
