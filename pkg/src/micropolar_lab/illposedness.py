"""Norm-inflation experiments for the micropolar system.

The initial data f^N consist of side-2 cubes at +-2^j e_2, j = N .. floor(3N/2)+1,
carrying an i-scaled divergence-free profile.  For frequencies in the low box E
only the +- pair of the same j interacts, and the intersection of the two
shifted cubes is again an axis-aligned box, so the second Picard iterate can be
evaluated by tensor Gauss rules without any large grid.

Conventions: F[fg] = (2 pi)^-3 f^ * g^, and A_2 carries the minus sign of the
mild formulation, A_2(t) = -int_0^t G(t - tau) F(A_1, A_1)(tau) dtau.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    AccuracyError,
    DegenerateRangeError,
    EmptySupportError,
    InvalidParameterError,
    InvalidTimeError,
    PerturbativeRegimeWarning,
    ResolutionError,
    UndefinedRatioError,
)
from .fields import CubeSet, LatticeGrid, SpectralField
from .littlewood_paley import DyadicPartition, fb_norm, make_partition
from .mild_solver import SolverConfig, picard_terms, propagate
from .quadrature import batched_box_rule, graded_time_rule, tensor_box_rule
from .semigroup import apply_functions, batch_eigenvalues, batch_semigroup_matrix

CONV = (2.0 * np.pi) ** -3
E_LO, E_HI = 0.1, 0.5
DELTA_DEFAULT = 0.05
DELTA_MAX = 0.1
J_TERMS = ("J1", "J2", "J3", "J4", "J5", "J6", "J7")
K_TERMS = ("K11", "K12", "K13", "K2", "K3", "K4", "K5")


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IllposedDatum:
    N: int
    delta: float
    order: int = 8

    @property
    def j_range(self):
        return list(range(self.N, (3 * self.N) // 2 + 2))

    @property
    def amplitude(self):
        return self.delta / math.sqrt(self.N)

    @property
    def t_N(self):
        return 2.0 ** (-2 * self.N)

    def cubes(self):
        centers = []
        for j in self.j_range:
            centers += [[0.0, 2.0 ** j, 0.0], [0.0, -(2.0 ** j), 0.0]]
        return CubeSet(np.array(centers), np.ones((len(centers), 3)), self.order)

    def profile(self, xi, scale):
        """Value of one cube's contribution at xi (3, ...), indicator taken as 1."""
        xi = np.asarray(xi, dtype=float)
        mod = np.sqrt(np.sum(xi ** 2, axis=0))
        c = 1j * self.amplitude * scale / mod
        out = np.zeros((6,) + xi.shape[1:], dtype=complex)
        out[0] = c * xi[1]
        out[1] = -c * xi[0]
        out[3] = c * xi[1]
        return out

    def indicator_weights(self, xi, face_weight=1.0):
        """sum_j 2^j (chi_j^+ + chi_j^-)(xi); points on a cube face get ``face_weight`` per axis."""
        xi = np.asarray(xi, dtype=float)
        total = np.zeros(xi.shape[1:])
        for j in self.j_range:
            for sgn in (1.0, -1.0):
                w = np.ones(xi.shape[1:])
                shift = xi.copy()
                shift[1] = shift[1] - sgn * 2.0 ** j
                for a in range(3):
                    d = np.abs(shift[a])
                    on_face = np.isclose(d, 1.0, rtol=0, atol=1e-12)
                    w *= np.where(d < 1.0, 1.0, 0.0) + np.where(on_face, face_weight, 0.0)
                total += 2.0 ** j * w
        return total

    def values(self, xi, face_weight=1.0):
        """f^N at arbitrary frequencies (closed cubes unless face_weight differs)."""
        xi = np.asarray(xi, dtype=float)
        w = self.indicator_weights(xi, face_weight)
        live = w != 0
        out = np.zeros((6,) + xi.shape[1:], dtype=complex)
        if np.any(live):
            out[:, live] = w[live] * self.profile(xi[:, live], 1.0)
        return out


def build_initial_data(N, delta, order=8):
    """f^N on the tensor Gauss nodes of its cubes."""
    if int(N) != N or N < 2:
        raise DegenerateRangeError(f"N must be an integer >= 2, got {N}")
    if not 0 < delta < 1:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    datum = IllposedDatum(int(N), float(delta), int(order))
    cubes = datum.cubes()
    vals = datum.values(cubes.nodes)
    f = SpectralField(vals, cubes=cubes, real_valued=True, divergence_free=True)
    return datum, f


# ---------------------------------------------------------------------------
# observation region
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObservationRegion:
    lo: float = E_LO
    hi: float = E_HI

    def contains(self, xi):
        xi = np.asarray(xi)
        return np.all((xi >= self.lo) & (xi <= self.hi), axis=0)

    @staticmethod
    def in_closure(xi):
        xi = np.asarray(xi)
        return (xi[0] >= 1 / 20) & (xi[0] <= 11 / 10) & (np.sqrt(np.sum(xi ** 2, axis=0)) <= 11 / 10)

    @property
    def radii(self):
        return self.lo * math.sqrt(3.0), self.hi * math.sqrt(3.0)

    def min_transverse(self):
        """min over E of 1 - xi_1^2/|xi|^2 (attained at xi = (hi, lo, lo))."""
        return 1.0 - self.hi ** 2 / (self.hi ** 2 + 2 * self.lo ** 2)

    def j0(self):
        lo, hi = self.radii
        for j0 in range(0, 64):
            part = DyadicPartition(-j0, j0)
            rs = np.linspace(lo, hi, 2001)
            if np.max(np.abs(part.block_sum(rs) - 1.0)) < 1e-12:
                return j0
        raise EmptySupportError("no symmetric block range covers E")

    def blocks(self):
        """Dyadic indices whose annulus meets E."""
        lo, hi = self.radii
        js = []
        for j in range(-20, 20):
            a, b = 0.75 * 2.0 ** j, 8.0 / 3.0 * 2.0 ** j
            if b > lo and a < hi:
                js.append(j)
        return js

    def rule(self, order):
        return tensor_box_rule([self.lo] * 3, [self.hi] * 3, order)

    def sample_closure(self, count, rng):
        out = np.empty((3, 0))
        while out.shape[1] < count:
            cand = rng.uniform([1 / 20, -1.1, -1.1], [1.1, 1.1, 1.1], size=(4 * count, 3)).T
            out = np.concatenate([out, cand[:, self.in_closure(cand)]], axis=1)
        return out[:, :count]


# ---------------------------------------------------------------------------
# data norms
# ---------------------------------------------------------------------------


def data_partition(N):
    return make_partition(N - 3, (3 * N) // 2 + 3)


def data_norm(N, delta, r, order=8):
    _, f = build_initial_data(N, delta, order)
    return fb_norm(f, -1.0, 1.0, r, data_partition(N))


def data_norm_scaling(N_list, delta, r, order=8):
    """Least-squares slope of log ||f^N||_{FB^{-1}_{1,r}} against log N."""
    if len(N_list) < 4:
        raise InvalidParameterError("need at least four values of N")
    norms = np.array([data_norm(N, delta, r, order) for N in N_list])
    slope = np.polyfit(np.log(N_list), np.log(norms), 1)[0]
    return float(slope), norms


# ---------------------------------------------------------------------------
# kernel signs
# ---------------------------------------------------------------------------


def j1_kernel(a, b):
    """(a_2 b_2)/(|a||b|) with a = xi - eta, b = eta."""
    na = np.sqrt(np.sum(a ** 2, axis=0))
    nb = np.sqrt(np.sum(b ** 2, axis=0))
    return a[1] * b[1] / (na * nb)


def k11_kernel(a, b):
    na = np.sqrt(np.sum(a ** 2, axis=0))
    nb = np.sqrt(np.sum(b ** 2, axis=0))
    return a[1] * b[1] ** 3 / (na * nb ** 3) + a[1] ** 3 * b[1] / (na ** 3 * nb)


def _pair_boxes(xi, j):
    """Boxes of eta with eta in one cube at scale j and xi - eta in the mirrored one.

    xi has shape (3, M); returns lo, hi of shape (3, 2M) (minus-side first).
    """
    c = 2.0 ** j
    los, his = [], []
    for sgn in (-1.0, 1.0):
        centre = np.array([0.0, sgn * c, 0.0])[:, None]
        other = -centre
        lo = np.maximum(centre - 1.0, xi - other - 1.0)
        hi = np.minimum(centre + 1.0, xi - other + 1.0)
        los.append(lo)
        his.append(hi)
    return np.concatenate(los, axis=1), np.concatenate(his, axis=1)


def kernel_sign_check(kind, j, samples, rng=None, region=None, closure=False):
    """Sampled (min, max) of the J1 or K11 kernel over admissible (xi, eta).

    xi is drawn uniformly from E, or from its enlargement when ``closure`` is set.
    """
    kernels = {"J1": j1_kernel, "K11": k11_kernel}
    if kind not in kernels:
        raise InvalidParameterError(f"unknown kernel {kind!r}")
    rng = np.random.Generator(np.random.Philox(key=0)) if rng is None else rng
    region = ObservationRegion() if region is None else region
    half = samples // 2
    if closure:
        xi = region.sample_closure(half, rng)
    else:
        xi = rng.uniform(region.lo, region.hi, size=(3, half))
    lo, hi = _pair_boxes(xi, j)
    if np.any(hi < lo):
        raise EmptySupportError(f"no admissible pairs at scale {j}")
    u = rng.uniform(size=lo.shape)
    eta = lo + u * (hi - lo)
    xi2 = np.concatenate([xi, xi], axis=1)
    vals = kernels[kind](xi2 - eta, eta)
    return float(np.min(vals)), float(np.max(vals))


# ---------------------------------------------------------------------------
# second iterate
# ---------------------------------------------------------------------------


def remainder_norm(xi, t):
    """Operator 2-norm of G_r(xi, t) = e^{-tA} - e^{-tA_1}.

    Both are functions of the commuting pair (A_1, A_2), so G_r is diagonal
    in the common eigenbasis with entries e^{-t lam_i} - e^{-t mu_i}.
    """
    k2 = np.sum(np.asarray(xi) ** 2, axis=0)
    lam = batch_eigenvalues(xi)
    d = np.stack(
        [
            np.exp(-t * lam[1]) - np.exp(-2 * t * k2),
            np.exp(-t * lam[2]) - np.exp(-t * k2),
            np.exp(-t * lam[3]) - np.exp(-t * k2),
        ]
    )
    return np.max(np.abs(d), axis=0)


def _propagate_split(xi, t, f):
    """Full, main and remainder propagation of f plus the majorants of G_r on it.

    Returns (full, main, rem, absrem, oprem) where ``absrem`` is the entrywise
    modulus |G_r| applied to f restricted to the velocity rows and the u1, u2, w1 columns,
    and ``oprem`` is ||G_r|| |f_u|.
    """
    k2 = np.sum(xi ** 2, axis=0)
    lam = batch_eigenvalues(xi)
    e1, e2 = np.exp(-t * k2), np.exp(-2.0 * t * k2)
    full_c = np.exp(-t * lam)
    main_c = np.stack([e1, e2, e1, e1])
    full, main = apply_functions(xi, f, [full_c, main_c])
    d = full_c - main_c
    s = np.sqrt(k2 + 1.0)
    alpha = 0.5 * ((d[2] + d[3]) + (d[2] - d[3]) / s)
    beta = (d[3] - d[2]) / (2.0 * s)
    k2safe = np.where(k2 == 0.0, 1.0, k2)
    a0, a1, b3 = np.abs(alpha) * f[0], np.abs(alpha) * f[1], np.abs(beta) * f[3]
    absrem = np.empty((3,) + k2.shape, dtype=complex)
    for v in range(3):
        pt0 = (v == 0) - xi[v] * xi[0] / k2safe
        pt1 = (v == 1) - xi[v] * xi[1] / k2safe
        absrem[v] = np.abs(pt0) * a0 + np.abs(pt1) * a1
    absrem[1] += np.abs(xi[2]) * b3
    absrem[2] += np.abs(xi[1]) * b3
    oprem = np.max(np.abs(d[1:]), axis=0) * np.abs(f[:3])
    return full, main, full - main, absrem, oprem


def _leray(xi):
    k2 = np.sum(xi ** 2, axis=0)
    P = -xi[:, None] * xi[None, :] / k2
    for a in range(3):
        P[a, a] += 1.0
    return P


@dataclass
class SecondIterate:
    xi: np.ndarray
    t: float
    value: np.ndarray  # (6, M) full F[A_2](xi)
    signed: dict  # term name -> complex (M,)
    paper: dict  # term name -> magnitude (M,) as in the estimate chains
    operator: dict  # J5, J6, J7, K5 with operator-norm remainders
    accuracy: float = 0.0
    meta: dict = field(default_factory=dict)

    def residual(self):
        """How far the signed J and K terms are from summing to the full value."""
        ju = sum(self.signed[k] for k in J_TERMS)
        kw = sum(self.signed[k] for k in K_TERMS)
        scale = max(float(np.max(np.abs(self.value[0]))), float(np.max(np.abs(self.value[3]))), 1e-300)
        return float(max(np.max(np.abs(ju - self.value[0])), np.max(np.abs(kw - self.value[3]))) / scale)


def _time_rule(datum, t, order):
    jmax = datum.j_range[-1]
    scale = 1.0 / (2.0 * (2.0 ** jmax + 1.0) ** 2)
    return graded_time_rule(t, scale, order=order, max_doublings=60)


def _evaluate(datum, t, xi, order, time_order):
    xi = np.asarray(xi, dtype=float)
    M = xi.shape[1]
    js = datum.j_range
    los, his, scales = [], [], []
    for j in js:
        lo, hi = _pair_boxes(xi, j)
        los.append(lo)
        his.append(hi)
        scales.append(np.full(lo.shape[1], 2.0 ** j))
    lo = np.concatenate(los, axis=1)
    hi = np.concatenate(his, axis=1)
    scale = np.concatenate(scales)
    if np.any(hi <= lo):
        raise EmptySupportError("a frequency sample has no interacting cube pair")
    owner = np.tile(np.arange(M), 2 * len(js))  # box -> xi sample
    eta, w = batched_box_rule(lo, hi, order)  # (3, B, q), (B, q)
    a = xi[:, owner][:, :, None] - eta
    f_b = datum.profile(eta, 1.0) * scale[:, None]
    f_a = datum.profile(a, 1.0) * scale[:, None]
    P = _leray(xi)
    taus, tw = _time_rule(datum, t, time_order)

    sum_box = np.zeros((len(owner), M))
    sum_box[np.arange(len(owner)), owner] = 1.0

    def conv(x, y):
        """sum over boxes of the eta integral of x_k(a) y_l(eta): (K, L, M)."""
        per_box = np.einsum("kbq,lbq,bq->klb", x, y, w)
        return per_box @ sum_box

    acc = {
        "mm": np.zeros((3, 3, M), complex),
        "cross": np.zeros((3, 3, M), complex),
        "rr": np.zeros((3, 3, M), complex),
        "Dmm": np.zeros((3, 3, M), complex),
        "Drm": np.zeros((3, 3, M), complex),
        "Dmr": np.zeros((3, 3, M), complex),
        "Drr": np.zeros((3, 3, M), complex),
        "J5p": np.zeros((3, 3, M), complex),
        "J6p": np.zeros((3, 3, M), complex),
        "J5o": np.zeros((3, 3, M)),
        "J6o": np.zeros((3, 3, M)),
    }
    value = np.zeros((6, M), complex)
    J7s = np.zeros(M, complex)
    K5s = np.zeros(M, complex)
    J7p = np.zeros(M, complex)
    K5p = np.zeros(M, complex)
    J7o = np.zeros(M)
    K5o = np.zeros(M)
    k2 = np.sum(xi ** 2, axis=0)
    ixi = 1j * xi

    # outer factors per tau, shared by all terms
    for tau, wt in zip(taus, tw):
        s = t - tau
        _, main_b, rem_b, gb, ob = _propagate_split(eta, tau, f_b)
        _, main_a, rem_a, ga, oa = _propagate_split(a, tau, f_a)

        mm = conv(main_a[:3], main_b[:3])
        cross = conv(main_a[:3], rem_b[:3]) + conv(rem_a[:3], main_b[:3])
        rr = conv(rem_a[:3], rem_b[:3])
        Dmm = conv(main_a[:3], main_b[3:])
        Drm = conv(rem_a[:3], main_b[3:])
        Dmr = conv(main_a[:3], rem_b[3:])
        Drr = conv(rem_a[:3], rem_b[3:])
        C = mm + cross + rr
        D = Dmm + Drm + Dmr + Drr
        # flux at xi: velocity Leray projected, rotation plain divergence
        Nu = np.einsum("lmM,kM,kmM->lM", P, ixi, C)
        Nw = np.einsum("kM,klM->lM", ixi, D)
        Nhat = CONV * np.concatenate([Nu, Nw])

        G = batch_semigroup_matrix(xi, s)
        Gm_u = np.exp(-s * k2)
        Gr = G.copy()
        Gr[0:3, 0:3] -= Gm_u * np.eye(3)[:, :, None]
        e1, e2 = np.exp(-s * k2), np.exp(-2 * s * k2)
        PL = xi[:, None] * xi[None, :] / k2
        Rm = e1 * (np.eye(3)[:, :, None] - PL) + e2 * PL
        Gr[3:, 3:] -= Rm

        value += wt * np.einsum("abM,bM->aM", G, Nhat)
        GrN = np.einsum("abM,bM->aM", Gr, Nhat)
        J7s += wt * GrN[0]
        K5s += wt * GrN[3]
        absGrN = np.einsum("abM,bM->aM", np.abs(Gr), Nhat)
        J7p += wt * absGrN[0]
        K5p += wt * absGrN[3]
        opn = remainder_norm(xi, s) * np.sqrt(np.sum(np.abs(Nhat) ** 2, axis=0))
        J7o += wt * opn
        K5o += wt * opn

        heat = wt * Gm_u
        acc["mm"] += heat * mm
        acc["cross"] += heat * cross
        acc["rr"] += heat * rr
        acc["Dmm"] += wt * np.einsum("lM,klM->klM", Rm[0], Dmm)
        acc["Drm"] += wt * np.einsum("lM,klM->klM", Rm[0], Drm)
        acc["Dmr"] += wt * np.einsum("lM,klM->klM", Rm[0], Dmr)
        acc["Drr"] += wt * np.einsum("lM,klM->klM", Rm[0], Drr)
        acc["J5p"] += heat * conv(main_a[:3], gb)
        acc["J6p"] += heat * conv(ga, gb)
        acc["J5o"] += heat * np.real(conv(np.abs(main_a[:3]), ob))
        acc["J6o"] += heat * np.real(conv(oa, ob))

    c = -CONV
    value = -value
    Prow = P[0]  # (3, M): P_{1l}

    def vel(term):
        """-(2pi)^-3 * sum_{k,l} P_{1l} i xi_k term[k, l]."""
        return c * np.einsum("lM,kM,klM->M", Prow, ixi, term)

    def single(term, k, l):
        return c * Prow[l] * ixi[k] * term[k, l]

    signed = {
        "J1": single(acc["mm"], 0, 0),
        "J2": single(acc["mm"], 1, 0),
        "J3": single(acc["mm"], 0, 1),
        "J4": single(acc["mm"], 1, 1),
        "J5": vel(acc["cross"]),
        "J6": vel(acc["rr"]),
        "J7": -J7s,
    }

    def rot(term, ks, ls):
        out = np.zeros(M, complex)
        for k in ks:
            for l in ls:
                out += c * ixi[k] * term[k, l]
        return out

    signed["K11"] = rot(acc["Dmm"], (0,), (0,))
    signed["K12"] = rot(acc["Dmm"], (1,), (0,))
    signed["K13"] = rot(acc["Dmm"], (0, 1, 2), (1, 2)) + rot(acc["Dmm"], (2,), (0,))
    signed["K2"] = rot(acc["Drm"], (0, 1, 2), (0, 1, 2))
    signed["K3"] = rot(acc["Dmr"], (0, 1, 2), (0, 1, 2))
    signed["K4"] = rot(acc["Drr"], (0, 1, 2), (0, 1, 2))
    signed["K5"] = -K5s

    paper = {k: np.abs(signed[k]) for k in ("J1", "J2", "J3", "J4", "K11", "K12", "K13", "K2", "K3", "K4")}
    absP = np.abs(Prow)
    paper["J5"] = 2 * CONV * np.einsum("klM->M", np.abs(np.einsum("lM,kM,klM->klM", Prow, xi, acc["J5p"])))
    paper["J6"] = CONV * np.einsum("klM->M", np.abs(np.einsum("lM,kM,klM->klM", Prow, xi, acc["J6p"])))
    paper["J7"] = np.abs(J7p)
    paper["K5"] = np.abs(K5p)
    operator = {
        "J5": 2 * CONV * np.einsum("lM,kM,klM->M", absP, np.abs(xi), acc["J5o"]),
        "J6": CONV * np.einsum("lM,kM,klM->M", absP, np.abs(xi), acc["J6o"]),
        "J7": J7o,
        "K5": K5o,
    }
    return value, signed, paper, operator


def second_iterate(datum: IllposedDatum, t, xi_samples, order=None, time_order=6, check=True):
    """F[A_2(f^N)(t)] at the given frequencies with its J/K decomposition."""
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    if xi.shape[0] != 3:
        xi = xi.T
    M = xi.shape[1]
    if t < 0:
        raise InvalidTimeError("t must be nonnegative")
    if t == 0:
        zero = np.zeros(M, complex)
        names = J_TERMS + K_TERMS
        return SecondIterate(
            xi, 0.0, np.zeros((6, M), complex),
            {k: zero.copy() for k in names},
            {k: np.zeros(M) for k in names},
            {k: np.zeros(M) for k in ("J5", "J6", "J7", "K5")},
        )
    if t < 1e-14:
        raise InvalidTimeError("t is below the time-quadrature resolution")
    order = datum.order if order is None else int(order)
    value, signed, paper, operator = _evaluate(datum, t, xi, order, time_order)
    accuracy = 0.0
    if check:
        probe = xi[:, : min(M, 3)]
        coarse, *_ = _evaluate(datum, t, probe, max(order - 2, 2), max(time_order - 2, 2))
        ref = value[:, : probe.shape[1]]
        accuracy = float(np.max(np.abs(coarse - ref)) / max(np.max(np.abs(ref)), 1e-300))
        if accuracy > 0.01:
            raise AccuracyError(f"quadrature self-estimate {accuracy:.2e} exceeds 1%")
    return SecondIterate(xi, float(t), value, signed, paper, operator, accuracy)


# ---------------------------------------------------------------------------
# term hierarchy
# ---------------------------------------------------------------------------

# group -> (member terms, consecutive-N ratio of the decay rate)
DECAY_GROUPS = {
    "J2+J3": (("J2", "J3"), lambda N: 0.5 * N / (N + 1)),
    "J4": (("J4",), lambda N: 0.25),
    "J5+J6": (("J5", "J6"), lambda N: 2.0 ** -0.5),
    "J7": (("J7",), lambda N: 0.25),
}
RATIO_FACTOR = 1.7
STABILITY = 0.25


def relative_spread(values):
    """max/min - 1 of a positive sequence."""
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise UndefinedRatioError("spread needs positive values")
    return float(values.max() / values.min() - 1.0)


def log_slope(N_list, values):
    return float(np.polyfit(np.log(np.asarray(N_list, float)), np.log(np.asarray(values, float)), 1)[0])


def observed_iterate(N, delta, t_factor=1.0, xi_order=4, quad_order=4, time_order=6):
    """Second iterate on the Gauss nodes of E, with the node weights (cached)."""
    if not 0 < delta < 1:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    return _observed_iterate(int(N), float(delta), float(t_factor), int(xi_order), int(quad_order), int(time_order))


@lru_cache(maxsize=16)
def _observed_iterate(N, delta, t_factor, xi_order, quad_order, time_order):
    datum = IllposedDatum(N, delta, quad_order)
    nodes, weights = ObservationRegion().rule(xi_order)
    t = t_factor * datum.t_N
    if t < 1e-14:
        raise InvalidTimeError("t is below the time-quadrature resolution")
    return second_iterate(datum, t, nodes, time_order=time_order), weights


def term_norms(result: SecondIterate, weights, delta):
    """L^1(E) norms of every term divided by delta^2; operator variants get an ':op' suffix."""
    out = {k: float(np.sum(result.paper[k] * weights)) / delta ** 2 for k in J_TERMS + K_TERMS}
    for k, v in result.operator.items():
        out[k + ":op"] = float(np.sum(v * weights)) / delta ** 2
    return out


def j_hierarchy(N_list=(3, 4, 5), delta=DELTA_DEFAULT, **quadrature):
    """Decay of the J terms in N at t = t_N, with the pass flags of the hierarchy check."""
    N_list = [int(N) for N in N_list]
    norms = {N: term_norms(*observed_iterate(N, delta, **quadrature), delta) for N in N_list}
    j1 = [norms[N]["J1"] for N in N_list]
    report = {
        "N": N_list,
        "norms": norms,
        "J1": {"values": j1, "spread": relative_spread(j1), "threshold": STABILITY},
        "groups": {},
    }
    report["J1"]["pass"] = report["J1"]["spread"] <= STABILITY
    for name, (members, rate) in DECAY_GROUPS.items():
        entry = {"ratios": [], "expected": [], "window": [], "operator_ratios": []}
        for a, b in zip(N_list, N_list[1:]):
            na = sum(norms[a][m] for m in members)
            nb = sum(norms[b][m] for m in members)
            expect = rate(a) ** (b - a)
            entry["ratios"].append(nb / na)
            entry["expected"].append(expect)
            entry["window"].append([expect / RATIO_FACTOR, expect * RATIO_FACTOR])
            if all(m + ":op" in norms[a] for m in members):
                oa = sum(norms[a][m + ":op"] for m in members)
                ob = sum(norms[b][m + ":op"] for m in members)
                entry["operator_ratios"].append(ob / oa)
        entry["pass"] = all(lo <= q <= hi for q, (lo, hi) in zip(entry["ratios"], entry["window"]))
        report["groups"][name] = entry
    report["pass"] = report["J1"]["pass"] and all(g["pass"] for g in report["groups"].values())
    return report


# ---------------------------------------------------------------------------
# inflation experiment
# ---------------------------------------------------------------------------

SPACES = ("fourier_besov", "besov_infty")


def _partial_norm(mag, nodes, weights, blocks):
    """max_j 2^-j ||psi_j g||_{L^1(E)} over the blocks meeting E."""
    part = DyadicPartition(min(blocks), max(blocks))
    absx = np.sqrt(np.sum(nodes ** 2, axis=0))
    return max(2.0 ** (-j) * float(np.sum(part.psi(absx, j) * mag * weights)) for j in blocks)


def aligned(values):
    """Real part of i * values: the data carry a factor i, so the leading terms are real here."""
    return np.real(1j * np.asarray(values))


@dataclass
class InflationReport:
    params: dict
    norms: dict
    ratios: dict
    checks: dict
    passed: dict
    rows: list = field(default_factory=list)

    ROW_FIELDS = ("xi1", "xi2", "xi3", "weight", "u2_abs", "omega2_abs", "u2_aligned", "omega2_aligned", "J1", "K11")

    def to_dict(self):
        return {
            "params": self.params,
            "norms": self.norms,
            "ratios": self.ratios,
            "checks": self.checks,
            "pass": self.passed,
        }

    def write_rows(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.ROW_FIELDS)
            for row in self.rows:
                writer.writerow([repr(float(v)) for v in row])


def _nonnegativity(datum, t, samples, seed, time_order):
    """Sign checks of the leading integrands and of the full value on the enlarged region."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    region = ObservationRegion()
    kernel_max = {
        kind: max(kernel_sign_check(kind, j, 20000, rng=rng, closure=True)[1] for j in datum.j_range)
        for kind in ("J1", "K11")
    }
    xi = region.sample_closure(samples, rng)
    res = second_iterate(datum, t, xi, time_order=time_order)
    out = {
        "J1_kernel_max": kernel_max["J1"],
        "K11_kernel_max": kernel_max["K11"],
        "J1_min_aligned": float(np.min(aligned(res.signed["J1"]))),
        "K11_min_aligned": float(np.min(aligned(res.signed["K11"]))),
    }
    for name, row in (("u2", 0), ("omega2", 3)):
        a = aligned(res.value[row])
        out[f"{name}_negative_part"] = float(np.sum(np.maximum(-a, 0.0)) / max(np.sum(np.abs(a)), 1e-300))
    return out


def inflation_experiment(
    N,
    delta=DELTA_DEFAULT,
    r=np.inf,
    space="fourier_besov",
    t_factor=1.0,
    xi_order=4,
    quad_order=4,
    time_order=6,
    norm_order=8,
    closure_samples=64,
    seed=0,
):
    """Data norm, linear part and second-iterate lower bounds at t = t_factor 2^-2N."""
    if space not in SPACES:
        raise InvalidParameterError(f"space must be one of {SPACES}, got {space!r}")
    if not r >= 1:
        raise InvalidParameterError(f"r must lie in [1, inf], got {r}")
    if delta > DELTA_MAX:
        warnings.warn(
            f"delta = {delta} exceeds {DELTA_MAX}; higher Picard orders may dominate",
            PerturbativeRegimeWarning,
            stacklevel=2,
        )
    datum, f = build_initial_data(N, delta, norm_order)
    t = t_factor * datum.t_N
    result, weights = observed_iterate(N, delta, t_factor, xi_order, quad_order, time_order)
    region = ObservationRegion()
    nodes = result.xi
    part = data_partition(N)
    # L^inf of a block is at most (2 pi)^-3 times the L^1 norm of its transform
    scale = CONV if space == "besov_infty" else 1.0
    data = scale * fb_norm(f, -1.0, 1.0, r, part)
    linear = scale * fb_norm(propagate(f, t), -1.0, 1.0, r, part)
    mu = np.sqrt(np.sum(np.abs(result.value[:3]) ** 2, axis=0))
    mw = np.sqrt(np.sum(np.abs(result.value[3:]) ** 2, axis=0))
    blocks = region.blocks()
    u2 = scale * _partial_norm(mu, nodes, weights, blocks)
    w2 = scale * _partial_norm(mw, nodes, weights, blocks)
    terms = term_norms(result, weights, delta)
    lead_u = terms["J1"]
    rest_u = sum(terms[k] for k in J_TERMS[1:])
    lead_w = terms["K11"]
    rest_w = sum(terms[k] for k in K_TERMS[1:])
    checks = {
        "accuracy": result.accuracy,
        "decomposition_residual": result.residual(),
        "u2_leading": lead_u,
        "u2_remainder": rest_u,
        "omega2_leading": lead_w,
        "omega2_remainder": rest_w,
        "terms": terms,
    }
    passed = {
        "perturbative": delta <= DELTA_MAX,
        "u2_leading_dominates": lead_u > rest_u,
        "omega2_leading_dominates": lead_w > rest_w,
    }
    if space == "besov_infty":
        signs = _nonnegativity(IllposedDatum(datum.N, datum.delta, quad_order), t, closure_samples, seed, time_order)
        checks["nonnegativity"] = signs
        passed["leading_nonnegative"] = (
            signs["J1_kernel_max"] < 0
            and signs["K11_kernel_max"] < 0
            and signs["J1_min_aligned"] >= 0
            and signs["K11_min_aligned"] >= 0
        )
    rows = [
        (x[0], x[1], x[2], wt, a, b, c, d, e, g)
        for x, wt, a, b, c, d, e, g in zip(
            nodes.T,
            weights,
            mu,
            mw,
            aligned(result.value[0]),
            aligned(result.value[3]),
            result.paper["J1"],
            result.paper["K11"],
        )
    ]
    return InflationReport(
        params={
            "N": int(N),
            "delta": float(delta),
            "r": float(r),
            "space": space,
            "t": float(t),
            "t_factor": float(t_factor),
            "xi_order": int(xi_order),
            "quad_order": int(quad_order),
            "time_order": int(time_order),
        },
        norms={"data": data, "A1": linear, "u2_surrogate": u2, "omega2_surrogate": w2},
        ratios={"u2": u2 / data, "omega2": w2 / data, "A1": linear / data},
        checks=checks,
        passed=passed,
        rows=rows,
    )


INFLATION_SLOPE = 0.5
INFLATION_SLOPE_TOL = 0.15


def inflation_scan(N_list=(3, 4, 5), delta=DELTA_DEFAULT, r=np.inf, space="fourier_besov", **options):
    """Run the experiment over N and test the inflation (r > 2) or stability (r <= 2) trend."""
    N_list = [int(N) for N in N_list]
    reports = [inflation_experiment(N, delta, r, space, **options) for N in N_list]
    data = [rep.norms["data"] for rep in reports]
    ru = [rep.ratios["u2"] for rep in reports]
    rw = [rep.ratios["omega2"] for rep in reports]
    summary = {
        "N": N_list,
        "r": float(r),
        "space": space,
        "data": data,
        "u2_ratio": ru,
        "omega2_ratio": rw,
        "data_slope": log_slope(N_list, data),
        "u2_slope": log_slope(N_list, ru),
        "omega2_slope": log_slope(N_list, rw),
        "data_spread": relative_spread(data),
        "u2_spread": relative_spread(ru),
        "omega2_spread": relative_spread(rw),
    }
    if r > 2:
        ok = [abs(summary[k] - INFLATION_SLOPE) <= INFLATION_SLOPE_TOL for k in ("u2_slope", "omega2_slope")]
        summary["mode"] = "inflation"
    else:
        ok = [summary["data_spread"] <= STABILITY, summary["u2_spread"] <= STABILITY]
        summary["mode"] = "stability"
    summary["pass"] = bool(all(ok))
    return summary, reports


# ---------------------------------------------------------------------------
# lattice cross-check
# ---------------------------------------------------------------------------

BASE_SPACING = (1.0 / 8.0, 1.0 / 4.0, 1.0 / 8.0)
BASE_POINTS = (32, 256, 32)


def _data_extent(N):
    return np.array([1.0, 2.0 ** ((3 * N) // 2 + 1) + 1.0, 1.0])


def cross_check_lattice(N, refine=1):
    """Anisotropic lattice for the cross-check: fine across the cubes, long along e_2.

    At refine = 1 it holds 64^3 points; each refinement halves every spacing.
    """
    h = np.array(BASE_SPACING)
    need = 2.0 * _data_extent(N) + E_HI
    n = np.array(BASE_POINTS)
    n = np.maximum(n, 2 * np.ceil(need / h / 2.0 + 0.5).astype(int))
    return LatticeGrid(tuple(int(v) * refine for v in n), tuple(h / refine))


def check_lattice_resolution(grid: LatticeGrid, N):
    """Raise unless products of the data cannot alias into E and cube faces sit on lattice planes."""
    extent = _data_extent(N)
    for a in range(3):
        period = grid.n[a] * grid.h[a]
        if 2.0 * extent[a] + E_HI >= period:
            raise ResolutionError(f"axis {a}: period {period:g} cannot hold products of extent {extent[a]:g}")
        if abs(1.0 / grid.h[a] - round(1.0 / grid.h[a])) > 1e-9:
            raise ResolutionError(f"axis {a}: spacing {grid.h[a]:g} does not divide the cube side")


def lattice_time_grid(datum: IllposedDatum, t, steps):
    """Times uniform in log(1 + tau/tau0), tau0 a quarter of the fastest decay time."""
    cmax = 2.0 * (2.0 ** datum.j_range[-1] + 1.0) ** 2
    tau0 = 0.25 / cmax
    s = np.linspace(0.0, math.log1p(t / tau0), int(steps) + 1)
    times = tau0 * np.expm1(s)
    times[0], times[-1] = 0.0, t
    return times


def lattice_second_iterate(datum: IllposedDatum, t, grid: LatticeGrid, steps):
    """A_2(f^N)(t) on the lattice, cube faces carrying half weight per axis."""
    check_lattice_resolution(grid, datum.N)
    f = SpectralField(datum.values(grid.xi, face_weight=0.5), grid=grid, real_valued=True, divergence_free=True)
    cfg = SolverConfig(grid=grid, dt=t / steps, T=t, dealias_fraction=1.0)
    return picard_terms(f, t, 2, cfg, times=lattice_time_grid(datum, t, steps))[1]


def lattice_points_in(grid: LatticeGrid, region=None):
    """Frequencies of the lattice inside E, shape (3, M)."""
    region = ObservationRegion() if region is None else region
    axes = [h * np.arange(int(np.ceil(region.lo / h - 1e-9)), int(np.floor(region.hi / h + 1e-9)) + 1) for h in grid.h]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh])


def _sample_lattice(values, grid, points):
    idx = tuple(np.mod(np.rint(points[a] / grid.h[a]).astype(int), grid.n[a]) for a in range(3))
    return values[(slice(None),) + idx]


@dataclass
class CrossCheckResult:
    N: int
    delta: float
    deviation: float
    lattice: LatticeGrid
    steps: int
    points: np.ndarray
    quadrature: np.ndarray
    lattice_values: np.ndarray

    def to_dict(self):
        return {
            "N": self.N,
            "delta": self.delta,
            "deviation": self.deviation,
            "lattice": self.lattice.to_dict(),
            "steps": self.steps,
            "points": int(self.points.shape[1]),
        }


def grid_cross_check(N=2, delta=DELTA_DEFAULT, refine=1, steps=None, reference=None):
    """Max relative deviation of F[A_2(f^N)(t_N)] between quadrature and lattice paths.

    The comparison points are the base-lattice frequencies in E, which every
    refinement keeps.  ``reference`` reuses quadrature values from an earlier call.
    """
    if N not in (2, 3):
        raise ResolutionError(f"lattice cross-check supports N = 2 or 3, got {N}")
    steps = 16 * refine if steps is None else int(steps)
    datum, _ = build_initial_data(N, delta)
    t = datum.t_N
    points = lattice_points_in(cross_check_lattice(N, 1))
    grid = cross_check_lattice(N, refine)
    if reference is None:
        reference = second_iterate(datum, t, points).value
    lat = _sample_lattice(lattice_second_iterate(datum, t, grid, steps).values, grid, points)
    err = np.sqrt(np.sum(np.abs(lat - reference) ** 2, axis=0))
    ref = np.sqrt(np.sum(np.abs(reference) ** 2, axis=0))
    return CrossCheckResult(int(N), float(delta), float(np.max(err / ref)), grid, steps, points, reference, lat)
