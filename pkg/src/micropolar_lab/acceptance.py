"""Acceptance checks, one function per criterion, each returning a ``Criterion`` record."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import illposedness as ip
from .calibration import case_rng, load_calibration, random_field
from .fields import LatticeGrid
from .littlewood_paley import fb_norm, make_partition
from .mild_solver import (
    SolverConfig,
    picard_iteration,
    picard_terms,
    propagate,
    solve_mild,
)
from .semigroup import (
    R_block,
    batch_main_matrix,
    build_symbol,
    closed_form_eigenvalues,
    main_part_via_Q,
    matrix_exp_oracle,
    min_eigenvalue,
    semigroup_matrix_from_bundle,
    symbol_matrix,
)


@dataclass
class Criterion:
    number: int
    name: str
    measured: dict
    threshold: dict
    passed: bool
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{status}] {self.number:2d} {self.name}: {shown}"

    def to_dict(self):
        return {
            "name": self.name,
            "measured": _plain(self.measured),
            "threshold": _plain(self.threshold),
            "pass": bool(self.passed),
            "details": _plain(self.details),
        }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _plain(obj):
    """JSON-ready copy with numpy scalars and arrays unwrapped."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _timed(fn):
    def run(*args, **kwargs):
        start = time.perf_counter()
        crit = fn(*args, **kwargs)
        crit.seconds = time.perf_counter() - start
        return crit

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _generator(seed):
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _frequencies(rng, count, r_min=1e-3, r_max=1e3, plane_fraction=0.2):
    """Random directions with log-uniform radius; a share lies on the xi_1 = 0 or xi_3 = 0 planes."""
    xi = rng.standard_normal((count, 3))
    planar = rng.uniform(size=count) < plane_fraction
    axis = np.where(rng.uniform(size=count) < 0.5, 0, 2)
    xi[planar, axis[planar]] = 0.0
    radius = np.exp(rng.uniform(np.log(r_min), np.log(r_max), size=count))
    return xi * (radius / np.linalg.norm(xi, axis=1))[:, None]


# ---------------------------------------------------------------------------
# 1-5: partition and symbol
# ---------------------------------------------------------------------------


@_timed
def partition_of_unity(samples=100_000, seed=0, j_min=-4, j_max=10):
    part = make_partition(j_min, j_max)
    lo, hi = part.resolved_band()
    rng = _generator(seed)
    r = np.exp(rng.uniform(np.log(lo), np.log(hi), size=samples))
    r = np.concatenate([r, [lo, hi]])
    residual = float(np.max(np.abs(part.block_sum(r) - 1.0)))
    # support endpoints of every block included, where an overlap would first show
    edges = np.concatenate([np.array(part.annulus(j)) for j in part.scales])
    probe = np.concatenate([r, edges, np.nextafter(edges, 0), np.nextafter(edges, np.inf)])
    overlap = 0.0
    for j in part.scales:
        pj = part.psi(probe, j)
        for k in part.scales:
            if k >= j + 2:
                overlap = max(overlap, float(np.max(np.abs(pj * part.psi(probe, k)))))
    return Criterion(
        1,
        "partition of unity",
        {"residual": residual, "far_overlap": overlap},
        {"residual": 1e-10, "far_overlap": 0.0},
        residual <= 1e-10 and overlap == 0.0,
        details={"band": [lo, hi], "samples": samples},
    )


@_timed
def symbol_algebra(samples=1000, seed=1):
    rng = _generator(seed)
    herm = trace = eig = recon = 0.0
    fallbacks = 0
    for xi in _frequencies(rng, samples):
        A = symbol_matrix(xi)
        k2 = float(xi @ xi)
        herm = max(herm, float(np.max(np.abs(A - A.conj().T))))
        trace = max(trace, abs(np.trace(A).real - (7 * k2 + 6)) / (7 * k2 + 6))
        lam = np.sort(closed_form_eigenvalues(k2))
        eig = max(eig, float(np.max(np.abs(np.linalg.eigvalsh(A) - lam))) / lam[-1])
        b = build_symbol(xi)
        fallbacks += b.used_fallback
        recon = max(recon, b.reconstruction_error())
    measured = {"hermiticity": herm, "trace": trace, "eigenvalues": eig, "reconstruction": recon}
    threshold = {"hermiticity": 1e-12, "trace": 1e-10, "eigenvalues": 1e-8, "reconstruction": 1e-8}
    return Criterion(
        2,
        "symbol algebra",
        measured,
        threshold,
        all(measured[k] <= threshold[k] for k in measured),
        details={"fallback_cases": fallbacks, "samples": samples},
    )


@_timed
def semigroup_correctness(samples=1000, seed=2):
    rng = _generator(seed)
    xs = _frequencies(rng, samples)
    ts = rng.uniform(0.0, 10.0, size=samples)
    oracle = compose = commute = main = rblock = 0.0
    for xi, t in zip(xs, ts):
        b = build_symbol(xi)
        G = semigroup_matrix_from_bundle(b, t)
        oracle = max(oracle, float(np.max(np.abs(G - matrix_exp_oracle(-t * b.A)))))
        s = 0.5 * t
        Gs = semigroup_matrix_from_bundle(b, s)
        compose = max(compose, float(np.max(np.abs(Gs @ Gs - G))))
        scale = float(np.max(np.abs(b.A)))
        commute = max(commute, float(np.max(np.abs(b.A1 @ b.A2 - b.A2 @ b.A1))) / scale)
        closed = batch_main_matrix(xi, t)
        main = max(main, float(np.max(np.abs(main_part_via_Q(b, t) - closed))))
        rblock = max(rblock, float(np.max(np.abs(R_block(xi, t) - closed[3:, 3:]))))
    measured = {"oracle": oracle, "composition": compose, "commutator": commute, "main_part": main, "r_block": rblock}
    threshold = {"oracle": 1e-8, "composition": 1e-8, "commutator": 1e-10, "main_part": 1e-8, "r_block": 1e-8}
    return Criterion(
        3,
        "semigroup correctness",
        measured,
        threshold,
        all(measured[k] <= threshold[k] for k in measured),
        details={"samples": samples, "t_range": [0.0, 10.0]},
    )


@_timed
def decay_rate(samples=1000, seed=3):
    rng = _generator(seed)
    xs = _frequencies(rng, samples)
    ts = rng.uniform(0.0, 10.0, size=samples)
    err = 0.0
    gap = math.inf
    for xi, t in zip(xs, ts):
        k2 = float(xi @ xi)
        lam = float(min_eigenvalue(k2))
        G = semigroup_matrix_from_bundle(build_symbol(xi), t)
        err = max(err, abs(float(np.linalg.norm(G, 2)) - math.exp(-t * lam)))
        gap = min(gap, lam - 0.5 * k2)
    return Criterion(
        4,
        "decay rate",
        {"norm_error": err, "min_gap": gap},
        {"norm_error": 1e-8, "min_gap": 0.0},
        err <= 1e-8 and gap >= 0.0,
        details={"samples": samples},
    )


KERNEL_BOUNDS = {"J1": (-1.0, -1.0 / 16.0), "K11": (-2.0, -1.0 / 256.0)}
KERNEL_MARGIN = 1e-9


@_timed
def kernel_signs(samples=1_000_000, seed=5, scales=range(2, 9)):
    rng = _generator(seed)
    rows = {}
    ok = True
    for kind, (lo, hi) in KERNEL_BOUNDS.items():
        for j in scales:
            vmin, vmax = ip.kernel_sign_check(kind, j, samples, rng=rng)
            rows[f"{kind}@{j}"] = [vmin, vmax]
            ok &= vmin >= lo - KERNEL_MARGIN and vmax <= hi + KERNEL_MARGIN
    measured = {
        f"{k}_range": [min(v[0] for n, v in rows.items() if n.startswith(k + "@")),
                       max(v[1] for n, v in rows.items() if n.startswith(k + "@"))]
        for k in KERNEL_BOUNDS
    }
    return Criterion(
        5,
        "kernel sign bounds",
        measured,
        {f"{k}_range": list(v) for k, v in KERNEL_BOUNDS.items()},
        bool(ok),
        details={"per_scale": rows, "samples": samples, "margin": KERNEL_MARGIN},
    )


# ---------------------------------------------------------------------------
# 6-9: ill-posedness experiments
# ---------------------------------------------------------------------------


@_timed
def data_norm_scaling(N_list=(4, 6, 8, 10, 12), delta=0.05, exponents=(2.0, 4.0, math.inf)):
    measured, threshold, ok = {}, {}, True
    norms = {}
    for r in exponents:
        slope, values = ip.data_norm_scaling(list(N_list), delta, r)
        target = 1.0 / r - 0.5
        key = f"slope_r{'inf' if math.isinf(r) else int(r)}"
        measured[key] = slope
        threshold[key] = [target - 0.1, target + 0.1]
        norms[key] = values
        ok &= abs(slope - target) <= 0.1
    return Criterion(6, "data-norm scaling", measured, threshold, bool(ok), details={"N": list(N_list), "norms": norms})


@_timed
def j_hierarchy(N_list=(3, 4, 5), delta=0.05):
    report = ip.j_hierarchy(N_list, delta)
    measured = {"J1_spread": report["J1"]["spread"]}
    threshold = {"J1_spread": ip.STABILITY}
    for name, g in report["groups"].items():
        measured[f"{name}_ratios"] = g["ratios"]
        threshold[f"{name}_ratios"] = g["window"]
    details = {
        "J1_values": report["J1"]["values"],
        "operator_ratios": {k: g["operator_ratios"] for k, g in report["groups"].items()},
        "passes": {k: g["pass"] for k, g in report["groups"].items()} | {"J1": report["J1"]["pass"]},
    }
    return Criterion(7, "J-term hierarchy", measured, threshold, bool(report["pass"]), details=details)


@_timed
def inflation_dichotomy(N_list=(3, 4, 5), delta=0.05):
    inf_summary, _ = ip.inflation_scan(N_list, delta, r=math.inf)
    two_summary, _ = ip.inflation_scan(N_list, delta, r=2.0)
    window = [ip.INFLATION_SLOPE - ip.INFLATION_SLOPE_TOL, ip.INFLATION_SLOPE + ip.INFLATION_SLOPE_TOL]
    measured = {
        "u2_slope_rinf": inf_summary["u2_slope"],
        "omega2_slope_rinf": inf_summary["omega2_slope"],
        "data_spread_r2": two_summary["data_spread"],
        "u2_spread_r2": two_summary["u2_spread"],
    }
    threshold = {
        "u2_slope_rinf": window,
        "omega2_slope_rinf": window,
        "data_spread_r2": ip.STABILITY,
        "u2_spread_r2": ip.STABILITY,
    }
    return Criterion(
        8,
        "inflation dichotomy",
        measured,
        threshold,
        bool(inf_summary["pass"] and two_summary["pass"]),
        details={"r_inf": inf_summary, "r_2": two_summary},
    )


@_timed
def lattice_cross_check(N=2, delta=0.05):
    base = ip.grid_cross_check(N, delta, refine=1)
    fine = ip.grid_cross_check(N, delta, refine=2, reference=base.quadrature)
    ok = base.deviation <= 0.05 and fine.deviation < base.deviation
    return Criterion(
        9,
        "lattice cross-check",
        {"deviation": base.deviation, "deviation_refined": fine.deviation},
        {"deviation": 0.05, "deviation_refined": "< deviation"},
        bool(ok),
        details={"base": base.to_dict(), "refined": fine.to_dict()},
    )


# ---------------------------------------------------------------------------
# 10-11: solver
# ---------------------------------------------------------------------------


@_timed
def solver_contracts(seed=10, n=16, xi_max=8.0):
    grid = LatticeGrid.cubic(n, xi_max)
    rng = _generator(seed)
    part = SolverConfig(grid=grid, dt=1.0, T=1.0).part

    def norm(f):
        return fb_norm(f, -1.0, 1.0, 2.0, part)

    # divergence and linear consistency over a nonlinear and a linear run
    U0 = random_field(grid, rng, 2).scaled(0.5)
    cfg = SolverConfig(grid=grid, dt=0.01, T=0.2)
    traj = solve_mild(U0, cfg)
    divergence = float(max(traj.diagnostics["divergence_residual"]))
    lin = solve_mild(U0, SolverConfig(grid=grid, dt=0.01, T=0.2, nonlinear=False))
    linear = max(float(np.max(np.abs(s.values - propagate(U0, t).values))) for s, t in zip(lin.states, lin.times))

    # one step against its halves, both measured from a reference eight times finer
    T = 0.1

    def final(dt):
        return solve_mild(U0, SolverConfig(grid=grid, dt=dt, T=T)).final

    ref = final(T / 8)
    order_ratio = norm(final(T) - ref) / norm(final(T / 2) - ref)

    # remainder after two Picard orders under amplitude scaling
    V0 = random_field(grid, rng, 3).scaled(20.0)
    Tp = 0.25
    pcfg = SolverConfig(grid=grid, dt=Tp / 32, T=Tp)
    deltas = (0.02, 0.04, 0.08)
    remainders = []
    for d in deltas:
        f = V0.scaled(d)
        A = picard_terms(f, Tp, 2, pcfg)
        remainders.append(norm(solve_mild(f, pcfg).final - A[0] - A[1]))
    slope = float(np.polyfit(np.log(deltas), np.log(remainders), 1)[0])

    measured = {"divergence": divergence, "linear": linear, "order_ratio": order_ratio, "truncation_slope": slope}
    threshold = {"divergence": 1e-10, "linear": 1e-8, "order_ratio": [3.4, 4.6], "truncation_slope": [2.8, 3.2]}
    ok = divergence <= 1e-10 and linear <= 1e-8 and 3.4 <= order_ratio <= 4.6 and abs(slope - 3.0) <= 0.2
    return Criterion(10, "solver contracts", measured, threshold, bool(ok), details={"remainders": remainders})


def small_data_run(seed=11, fraction=0.99, calibration=None):
    """Picard iteration from a corpus-type field at ``fraction`` of the calibrated radius."""
    cal = load_calibration() if calibration is None else calibration
    s = cal.settings
    grid = LatticeGrid.cubic(s["n"], s["xi_max"])
    cfg = SolverConfig(grid=grid, dt=s["T"] / s["steps"], T=s["T"], alpha=0.5, r=2.0)
    U0 = random_field(grid, case_rng(seed, 0), s["kmax"]).scaled(fraction * cal["eps"])
    res = picard_iteration(U0, cfg, max_iter=40)
    return {
        "seed": seed,
        "data_norm": fb_norm(U0, -1.0, 1.0, 2.0, cfg.part),
        "eps": cal["eps"],
        "ratios": res.ratios,
        "max_ratio": max(res.ratios) if res.ratios else 0.0,
        "x_norm": res.x_alpha_norm(0.5, 2.0, cfg.part),
        "bound": 1.0 / (2.0 * cal["C1"]),
        "converged": res.converged,
        "calibration": cal.digest,
    }


@_timed
def small_data_fixed_point(seed=11, calibration=None):
    first = small_data_run(seed, calibration=calibration)
    again = small_data_run(seed, calibration=calibration)
    identical = json.dumps(_plain(first), sort_keys=True) == json.dumps(_plain(again), sort_keys=True)
    ok = first["max_ratio"] <= 0.5 and first["x_norm"] < first["bound"] and first["converged"] and identical
    return Criterion(
        11,
        "small-data fixed point",
        {"max_ratio": first["max_ratio"], "x_norm": first["x_norm"], "identical": identical},
        {"max_ratio": 0.5, "x_norm": first["bound"], "identical": True},
        bool(ok),
        details=first,
    )


CRITERIA = {
    1: partition_of_unity,
    2: symbol_algebra,
    3: semigroup_correctness,
    4: decay_rate,
    5: kernel_signs,
    6: data_norm_scaling,
    7: j_hierarchy,
    8: inflation_dichotomy,
    9: lattice_cross_check,
    10: solver_contracts,
    11: small_data_fixed_point,
}


def run_all(numbers=None):
    numbers = sorted(CRITERIA) if numbers is None else numbers
    return [CRITERIA[k]() for k in numbers]
