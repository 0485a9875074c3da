"""Fourier symbol of the linearised micropolar system and its semigroup.

With kappa = mu = 1 and chi = nu = 1/2 the linear part of the system acts on
each frequency as the Hermitian 6x6 matrix

    A(xi) = [[ |xi|^2 I,  B(xi)                 ],
             [ B(xi),     (|xi|^2 + 2) I + C(xi) ]]

with B(xi) v = -i xi x v and C(xi) = xi xi^T.  Its spectrum is
{|xi|^2, 2|xi|^2 + 2, lam_-, lam_-, lam_+, lam_+} with
lam_+- = |xi|^2 + 1 +- sqrt(|xi|^2 + 1).

Two evaluation routes are provided:

* per-frequency ``SymbolBundle`` objects carrying explicit matrices and the
  closed-form diagonaliser ``Q`` (used for verification and debugging);
* batched functions working on arrays of frequencies through the four
  spectral projectors of ``A``; these never form 6x6 matrices per sample
  unless asked to and are what the solver and the quadrature code use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidMatrixError, InvalidTimeError, SingularFrequencyError

# explicit Q is used only when both xi_1 and xi_3 are this far from zero
Q_PLANE_TOL = 1e-6
Q_COND_MAX = 1e8


def curl_symbol(xi):
    """3x3 block B(xi) = i [[0, xi3, -xi2], [-xi3, 0, xi1], [xi2, -xi1, 0]]."""
    x1, x2, x3 = xi
    return 1j * np.array(
        [[0.0, x3, -x2], [-x3, 0.0, x1], [x2, -x1, 0.0]], dtype=complex
    )


def symbol_matrix(xi):
    """Assemble A(xi) directly from its block definition."""
    xi = np.asarray(xi, dtype=float)
    k2 = float(xi @ xi)
    B = curl_symbol(xi)
    C = np.outer(xi, xi)
    A = np.zeros((6, 6), dtype=complex)
    A[:3, :3] = k2 * np.eye(3)
    A[:3, 3:] = B
    A[3:, :3] = B
    A[3:, 3:] = (k2 + 2.0) * np.eye(3) + C
    return A


def closed_form_eigenvalues(k2):
    """Eigenvalues in the order used by Q: |xi|^2, 2|xi|^2+2, lam_-, lam_-, lam_+, lam_+."""
    s = math.sqrt(k2 + 1.0)
    lam_minus = s * k2 / (s + 1.0)  # = k2 + 1 - s without cancellation
    lam_plus = k2 + 1.0 + s
    return np.array([k2, 2.0 * k2 + 2.0, lam_minus, lam_minus, lam_plus, lam_plus])


def explicit_Q(xi):
    """The closed-form eigenvector matrix; singular when xi_1 or xi_3 vanishes."""
    x1, x2, x3 = (float(c) for c in xi)
    k2 = x1 * x1 + x2 * x2 + x3 * x3
    s = math.sqrt(k2 + 1.0)
    tp = s + 1.0
    tm = k2 / (s + 1.0)
    i = 1j
    a = x1 * x1 + x3 * x3
    b = x1 * x1 + x2 * x2
    Q = np.array(
        [
            [x1 / x3, 0, -i * x3 * tp / k2, i * x2 * tp / k2, i * x3 * tm / k2, -i * x2 * tm / k2],
            [
                x2 / x3, 0,
                -i * x2 * x3 * tp / (x1 * k2), -i * a * tp / (x1 * k2),
                i * x2 * x3 * tm / (x1 * k2), i * a * tm / (x1 * k2),
            ],
            [
                1, 0,
                i * b * tp / (x1 * k2), i * x2 * x3 * tp / (x1 * k2),
                -i * b * tm / (x1 * k2), -i * x2 * x3 * tm / (x1 * k2),
            ],
            [0, x1 / x3, -x2 / x1, -x3 / x1, -x2 / x1, -x3 / x1],
            [0, x2 / x3, 1, 0, 1, 0],
            [0, 1, 0, 1, 0, 1],
        ],
        dtype=complex,
    )
    return Q


def _numerical_eigenbasis(A, eigenvalues):
    """Orthonormal eigenvectors of Hermitian A, ordered to match ``eigenvalues``."""
    w, V = np.linalg.eigh(A)
    target = np.asarray(eigenvalues)
    order = np.argsort(target, kind="stable")
    Q = np.empty_like(V)
    # eigh returns ascending eigenvalues; the closed-form list sorted the same way
    Q[:, order] = V
    return Q


@dataclass(frozen=True)
class SymbolBundle:
    xi: np.ndarray
    A: np.ndarray
    B_block: np.ndarray
    C_block: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    Q: np.ndarray
    Q_inv: np.ndarray
    eigenvalues: np.ndarray
    xi_tilde_plus: float
    xi_tilde_minus: float
    used_fallback: bool
    q_condition: float

    @property
    def k2(self):
        return float(self.xi @ self.xi)

    def reconstruction_error(self):
        """max|Q diag(lam) Q^-1 - A| / max|A|."""
        R = self.Q @ np.diag(self.eigenvalues) @ self.Q_inv
        return float(np.max(np.abs(R - self.A)) / np.max(np.abs(self.A)))


def build_symbol(xi) -> SymbolBundle:
    xi = np.asarray(xi, dtype=float).reshape(3)
    k2 = float(xi @ xi)
    if not k2 > 0.0:
        raise SingularFrequencyError("the symbol is only diagonalised for xi != 0")
    A = symbol_matrix(xi)
    lam = closed_form_eigenvalues(k2)
    s = math.sqrt(k2 + 1.0)
    tp, tm = s + 1.0, k2 / (s + 1.0)
    knorm = math.sqrt(k2)

    fallback = min(abs(xi[0]), abs(xi[2])) < Q_PLANE_TOL * knorm
    cond = float("inf")
    if not fallback:
        Q = explicit_Q(xi)
        cond = float(np.linalg.cond(Q))
        fallback = not np.isfinite(cond) or cond > Q_COND_MAX
    if fallback:
        Q = _numerical_eigenbasis(A, lam)
        Q_inv = Q.conj().T
        cond = 1.0
    else:
        Q_inv = np.linalg.inv(Q)

    main = np.array([k2, 2.0 * k2, k2, k2, k2, k2])
    rest = np.array([0.0, 2.0, -tm, -tm, tp, tp])
    A1 = Q @ np.diag(main) @ Q_inv
    A2 = Q @ np.diag(rest) @ Q_inv
    return SymbolBundle(
        xi=xi,
        A=A,
        B_block=curl_symbol(xi),
        C_block=np.outer(xi, xi),
        A1=A1,
        A2=A2,
        Q=Q,
        Q_inv=Q_inv,
        eigenvalues=lam,
        xi_tilde_plus=tp,
        xi_tilde_minus=tm,
        used_fallback=bool(fallback),
        q_condition=cond,
    )


def _check_time(t):
    if not t >= 0.0:
        raise InvalidTimeError(f"semigroup time must be nonnegative, got {t!r}")


def semigroup_matrix_from_bundle(bundle: SymbolBundle, t):
    _check_time(t)
    return bundle.Q @ np.diag(np.exp(-t * bundle.eigenvalues)) @ bundle.Q_inv


def semigroup_apply(bundle: SymbolBundle, t, v):
    """e^{-tA(xi)} v through the diagonaliser."""
    _check_time(t)
    v = np.asarray(v, dtype=complex)
    return bundle.Q @ (np.exp(-t * bundle.eigenvalues) * (bundle.Q_inv @ v))


def R_block(xi, t):
    """Lower-right block of e^{-tA1}, written entrywise as in the main/remainder split."""
    xi = np.asarray(xi, dtype=float)
    k2 = float(xi @ xi)
    e1 = math.exp(-t * k2)
    e2 = math.exp(-2.0 * t * k2)
    x = xi
    R = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            if a == b:
                others = k2 - x[a] ** 2
                R[a, b] = (x[a] ** 2 * e2 + others * e1) / k2
            else:
                R[a, b] = (x[a] * x[b] * e2 - x[a] * x[b] * e1) / k2
    return R


def split_main_remainder(bundle: SymbolBundle, t):
    """Return (G_m, G_r) with G_m = blockdiag(e^{-t|xi|^2} I, R(xi, t)) and G_r = e^{-tA} - G_m."""
    _check_time(t)
    Gm = np.zeros((6, 6), dtype=complex)
    Gm[:3, :3] = math.exp(-t * bundle.k2) * np.eye(3)
    Gm[3:, 3:] = R_block(bundle.xi, t)
    G = semigroup_matrix_from_bundle(bundle, t)
    return Gm, G - Gm


def main_part_via_Q(bundle: SymbolBundle, t):
    """e^{-tA1} computed from the diagonaliser (cross-check of the A1 split)."""
    _check_time(t)
    k2 = bundle.k2
    main = np.array([k2, 2.0 * k2, k2, k2, k2, k2])
    return bundle.Q @ np.diag(np.exp(-t * main)) @ bundle.Q_inv


def matrix_exp_oracle(M, tol=1e-12):
    """exp(M) by scaling and squaring of a truncated Taylor series.

    The Taylor sum is stopped once the tail bound ||X||^{k+1}/(k+1)! / (1 - ||X||/(k+2))
    drops below ``tol`` (X the scaled matrix, ||X|| <= 1/2).
    """
    M = np.asarray(M, dtype=complex)
    if not np.all(np.isfinite(M)):
        raise InvalidMatrixError("matrix has non-finite entries")
    if not tol > 0:
        raise InvalidMatrixError("tolerance must be positive")
    norm = float(np.max(np.sum(np.abs(M), axis=1))) if M.size else 0.0
    squarings = 0
    if norm > 0.5:
        squarings = int(math.ceil(math.log2(norm / 0.5)))
    X = M / (2.0 ** squarings)
    xn = norm / (2.0 ** squarings)
    n = M.shape[0]
    result = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    k = 0
    while True:
        k += 1
        term = term @ X / k
        result = result + term
        tail = xn ** (k + 1) / math.factorial(k + 1) / (1.0 - xn / (k + 2))
        if tail <= tol or k > 60:
            break
    for _ in range(squarings):
        result = result @ result
    return result


# ---------------------------------------------------------------------------
# batched spectral calculus
# ---------------------------------------------------------------------------


def batch_eigenvalues(xi):
    """Distinct eigenvalues (4, ...) of A at frequencies xi (3, ...).

    Order: velocity-longitudinal |xi|^2, rotation-longitudinal 2|xi|^2+2,
    transverse lam_-, transverse lam_+.
    """
    k2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    s = np.sqrt(k2 + 1.0)
    return np.stack([k2, 2.0 * k2 + 2.0, s * k2 / (s + 1.0), k2 + 1.0 + s])


def _cross(a, b):
    return np.stack(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def spectral_components(xi, v):
    """Decompose v (6, ...) into the four spectral projections of A(xi).

    Returns an array (4, 6, ...).  Frequencies with xi = 0 get all-zero
    projections (the mean mode is excluded throughout).
    """
    xi = np.asarray(xi, dtype=float)
    v = np.asarray(v, dtype=complex)
    k2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    zero = k2 == 0.0
    k2safe = np.where(zero, 1.0, k2)
    s = np.sqrt(k2 + 1.0)
    u, w = v[:3], v[3:]
    xu = (xi[0] * u[0] + xi[1] * u[1] + xi[2] * u[2]) / k2safe
    xw = (xi[0] * w[0] + xi[1] * w[1] + xi[2] * w[2]) / k2safe
    uL = xi * xu
    wL = xi * xw
    uT = u - uL
    wT = w - wL
    Bu = -1j * _cross(xi, u)
    Bw = -1j * _cross(xi, w)
    inv_s = 1.0 / s
    zeros3 = np.zeros_like(u)
    out = np.empty((4, 6) + v.shape[1:], dtype=complex)
    out[0, :3], out[0, 3:] = uL, zeros3
    out[1, :3], out[1, 3:] = zeros3, wL
    out[2, :3] = 0.5 * ((1.0 + inv_s) * uT - inv_s * Bw)
    out[2, 3:] = 0.5 * (-inv_s * Bu + (1.0 - inv_s) * wT)
    out[3, :3] = 0.5 * ((1.0 - inv_s) * uT + inv_s * Bw)
    out[3, 3:] = 0.5 * (inv_s * Bu + (1.0 + inv_s) * wT)
    if np.any(zero):
        out[..., zero] = 0.0
    return out


def apply_functions(xi, v, coeffs):
    """[g(A(xi)) v for g in coeffs], sharing the projections between them.

    Each entry of ``coeffs`` is either a callable receiving the (4, ...)
    eigenvalue array or an evaluated (4, ...) coefficient array.  The
    projections are combined on the fly, so no (4, 6, ...) intermediate is formed.
    """
    xi = np.asarray(xi, dtype=float)
    v = np.asarray(v, dtype=complex)
    lam = None
    k2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    zero = k2 == 0.0
    k2safe = np.where(zero, 1.0, k2)
    inv_s = 1.0 / np.sqrt(k2 + 1.0)
    u, w = v[:3], v[3:]
    uL = xi * ((xi[0] * u[0] + xi[1] * u[1] + xi[2] * u[2]) / k2safe)
    wL = xi * ((xi[0] * w[0] + xi[1] * w[1] + xi[2] * w[2]) / k2safe)
    Bw = -1j * _cross(xi, w)
    Bu = -1j * _cross(xi, u)
    results = []
    for g in coeffs:
        if callable(g):
            lam = batch_eigenvalues(xi) if lam is None else lam
            g = g(lam)
        g1, g2, gm, gp = g[0], g[1], g[2], g[3]
        same_t = 0.5 * (gm + gp)
        diff_t = 0.5 * (gp - gm) * inv_s
        out = np.empty(np.broadcast_shapes(v.shape, (6,) + np.shape(g1)), dtype=complex)
        # B annihilates longitudinal vectors, so only transverse parts mix
        out[:3] = (g1 - same_t + diff_t) * uL + (same_t - diff_t) * u + diff_t * Bw
        out[3:] = (g2 - same_t - diff_t) * wL + (same_t + diff_t) * w + diff_t * Bu
        if np.any(zero):
            out[..., zero] = 0.0
        results.append(out)
    return results


def apply_function(xi, v, g):
    """g(A(xi)) v for a scalar function g of the four distinct eigenvalues."""
    return apply_functions(xi, v, [g])[0]


@dataclass(frozen=True)
class Mixing:
    """g(A) written as u -> a_u P_L u + b_u u + c B w, w -> a_w P_L w + b_w w + c B u.

    ``c`` already carries the -i of B = -i xi x, so it multiplies xi x (.)
    directly.  All coefficients vanish at xi = 0.
    """

    a_u: np.ndarray
    b_u: np.ndarray
    c: np.ndarray
    a_w: np.ndarray
    b_w: np.ndarray

    def __add__(self, other):
        return Mixing(*(x + y for x, y in zip(self._parts(), other._parts())))

    def __sub__(self, other):
        return Mixing(*(x - y for x, y in zip(self._parts(), other._parts())))

    def __neg__(self):
        return Mixing(*(-x for x in self._parts()))

    def _parts(self):
        return self.a_u, self.b_u, self.c, self.a_w, self.b_w


class SpectralBasis:
    """Frequency-dependent data reused when applying many functions of A on one point set."""

    def __init__(self, xi):
        xi = np.asarray(xi, dtype=float)
        k2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
        self.xi = xi
        self.zero = k2 == 0.0
        self.unit = xi / np.sqrt(np.where(self.zero, 1.0, k2))
        self.inv_s = 1.0 / np.sqrt(k2 + 1.0)
        self.lam = batch_eigenvalues(xi)

    def mixing(self, g) -> Mixing:
        """Mixing coefficients of g(A) for a (4, ...) coefficient array on the eigenvalues."""
        g1, g2, gm, gp = g[0], g[1], g[2], g[3]
        same_t = 0.5 * (gm + gp)
        diff_t = 0.5 * (gp - gm) * self.inv_s
        parts = [g1 - same_t + diff_t, same_t - diff_t, -1j * diff_t, g2 - same_t - diff_t, same_t + diff_t]
        live = ~self.zero
        return Mixing(*(np.where(live, x, 0.0) for x in parts))

    def exp(self, t) -> Mixing:
        return self.mixing(np.exp(-t * self.lam))

    def apply(self, v, mix: Mixing, divergence_free=False):
        return self.apply_sum([(v, mix)], divergence_free)

    def apply_sum(self, pairs, divergence_free=False):
        """sum_i g_i(A) v_i for (v_i, mixing_i) pairs.

        Cross products and projections are linear, so the weighted inputs are
        summed first and each is applied once.  With ``divergence_free`` the
        velocity parts are taken to have no longitudinal component.
        """
        xi, unit = self.xi, self.unit
        out = np.zeros(pairs[0][0].shape, dtype=complex)
        cw = np.zeros(out[3:].shape, dtype=complex)
        cu = np.zeros_like(cw)
        aw = np.zeros_like(cw)
        au = None if divergence_free else np.zeros_like(cw)
        for v, m in pairs:
            u, w = v[:3], v[3:]
            out[:3] += m.b_u * u
            out[3:] += m.b_w * w
            cw += m.c * w
            cu += m.c * u
            aw += m.a_w * w
            if au is not None:
                au += m.a_u * u
        out[:3] += _cross(xi, cw)
        out[3:] += _cross(xi, cu) + unit * (unit[0] * aw[0] + unit[1] * aw[1] + unit[2] * aw[2])
        if au is not None:
            out[:3] += unit * (unit[0] * au[0] + unit[1] * au[1] + unit[2] * au[2])
        return out


def remainder_coefficients(xi, t):
    """Spectral coefficients of G_r = e^{-tA} - e^{-tA1}.

    A1 acts as |xi|^2 on every projector except the rotation-longitudinal one,
    where it is 2|xi|^2; the difference is therefore diagonal in the same basis.
    """
    xi = np.asarray(xi, dtype=float)
    k2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    lam = batch_eigenvalues(xi)
    heat = np.exp(-t * k2)
    return np.stack(
        [
            np.zeros_like(k2 * t),
            np.exp(-t * lam[1]) - np.exp(-2.0 * t * k2),
            np.exp(-t * lam[2]) - heat,
            np.exp(-t * lam[3]) - heat,
        ]
    )


def batch_semigroup_apply(xi, t, v):
    """e^{-tA(xi)} v for arrays of frequencies (3, ...) and vectors (6, ...)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidTimeError("semigroup time must be nonnegative")
    return apply_function(xi, v, lambda lam: np.exp(-t * lam))


def batch_main_apply(xi, t, v):
    """e^{-tA1(xi)} v = (e^{-t|xi|^2} u, R(xi,t) w) for arrays."""
    xi = np.asarray(xi, dtype=float)
    v = np.asarray(v, dtype=complex)
    k2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    zero = k2 == 0.0
    k2safe = np.where(zero, 1.0, k2)
    e1 = np.exp(-t * k2)
    e2 = np.exp(-2.0 * t * k2)
    w = v[3:]
    wL = xi * ((xi[0] * w[0] + xi[1] * w[1] + xi[2] * w[2]) / k2safe)
    out = np.empty_like(v)
    out[:3] = e1 * v[:3]
    out[3:] = e1 * (w - wL) + e2 * wL
    return out


def projector_matrices(xi):
    """Spectral projectors as explicit matrices, shape (4, 6, 6, ...)."""
    xi = np.asarray(xi, dtype=float)
    batch = xi.shape[1:]
    eye = np.zeros((6, 6) + batch, dtype=complex)
    for c in range(6):
        eye[c, c] = 1.0
    cols = [spectral_components(xi, eye[:, c]) for c in range(6)]
    # cols[c] has shape (4, 6, ...) = projector applied to unit vector e_c
    return np.stack(cols, axis=2)


def batch_semigroup_matrix(xi, t):
    """e^{-tA(xi)} as (6, 6, ...) matrices; t broadcasts against the batch."""
    lam = batch_eigenvalues(np.asarray(xi, dtype=float))
    P = projector_matrices(xi)
    return np.einsum("i...,iab...->ab...", np.exp(-np.asarray(t) * lam), P)


def batch_main_matrix(xi, t):
    """e^{-tA1(xi)} as (6, 6, ...) matrices."""
    xi = np.asarray(xi, dtype=float)
    k2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    e1 = np.exp(-t * k2)
    e2 = np.exp(-2.0 * t * k2)
    out = np.zeros((6, 6) + np.broadcast(k2, e1).shape, dtype=complex)
    for a in range(3):
        out[a, a] = e1
        for b in range(3):
            PL = xi[a] * xi[b] / k2
            out[3 + a, 3 + b] = (e1 if a == b else 0.0) + (e2 - e1) * PL
    return out


def min_eigenvalue(k2):
    """|xi|^2 + 1 - sqrt(|xi|^2 + 1), evaluated without cancellation."""
    k2 = np.asarray(k2, dtype=float)
    s = np.sqrt(k2 + 1.0)
    return s * k2 / (s + 1.0)


def describe(xi, t=None):
    """Formatted dump of A, Q and the eigenvalues at one frequency."""
    b = build_symbol(xi)
    opts = dict(precision=6, suppress_small=True, max_line_width=160)
    lines = [
        f"xi = {np.array2string(b.xi, **opts)}   |xi|^2 = {b.k2:.12g}",
        f"xi~+ = {b.xi_tilde_plus:.12g}   xi~- = {b.xi_tilde_minus:.12g}",
        f"eigenvalues = {np.array2string(b.eigenvalues, **opts)}",
        f"Q path: {'numerical eigenbasis (fallback)' if b.used_fallback else 'explicit'}"
        f"   cond(Q) = {b.q_condition:.3e}   reconstruction = {b.reconstruction_error():.3e}",
        "A =",
        np.array2string(b.A, **opts),
        "Q =",
        np.array2string(b.Q, **opts),
    ]
    if t is not None:
        lines += ["e^{-tA} =", np.array2string(semigroup_matrix_from_bundle(b, t), **opts)]
    return "\n".join(lines)
