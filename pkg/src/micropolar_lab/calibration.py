"""Empirical constants for the estimates whose constants are not explicit.

C1 bounds the bilinear Duhamel term in X^alpha_T, C2 the linear one, and
eps = 1/(4 C1 C2) is the resulting small-data radius.  c0 and c_prime are the
measured constants of the leading and J2+J3 terms of the second iterate, and
product_law the corpus maximum of the product-law ratio.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import CalibrationError
from .fields import LatticeGrid, SpectralField
from .illposedness import DECAY_GROUPS, observed_iterate, term_norms
from .littlewood_paley import fb_norm, product_law_ratio
from .mild_solver import (
    SolverConfig,
    bilinear_operator,
    leray_project,
    linear_trajectory,
    linear_x_alpha_norm,
    uniform_times,
    x_alpha_norm,
)

FORMAT_NAME = "micropolar-calibration"
FORMAT_VERSION = 1
DEFAULT_PATH = "calibration.json"


@dataclass(frozen=True)
class CalibrationSettings:
    seed: int = 20240521
    pairs: int = 50
    n: int = 16
    xi_max: float = 8.0
    kmax: int = 2
    T: float = 0.25
    steps: int = 32
    alpha: float = 0.5
    r: float = 2.0
    time_order: int = 8
    quad_order: int = 4
    xi_order: int = 4
    delta: float = 0.05
    N_list: tuple = (3, 4, 5)

    def to_dict(self):
        d = asdict(self)
        d["N_list"] = list(self.N_list)
        return d


@dataclass(frozen=True)
class Calibration:
    constants: dict
    settings: dict
    digest: str

    def __getitem__(self, key):
        return self.constants[key]


def case_rng(seed, index):
    """Independent counter-based stream for corpus case ``index``."""
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(index) + 1))


def corpus_grid(settings: CalibrationSettings):
    return LatticeGrid.cubic(settings.n, settings.xi_max)


def random_field(grid: LatticeGrid, rng, kmax):
    """Real divergence-free field with spectrum in |k|_inf <= kmax, unit FB^{-1}_{1,2} norm."""
    noise = rng.standard_normal((6,) + grid.shape)
    values = grid.to_spectral_real(noise)
    k = np.max(np.abs(np.stack(np.meshgrid(*grid.index_axes, indexing="ij"))), axis=0)
    values *= (k <= kmax) & (k > 0)
    f = leray_project(SpectralField(values, grid=grid, real_valued=True))
    cfg = SolverConfig(grid=grid, dt=1.0, T=1.0)
    norm = fb_norm(f, -1.0, 1.0, 2.0, cfg.part)
    if not norm > 0:
        raise CalibrationError("corpus field vanished", case={"kmax": kmax})
    return f.scaled(1.0 / norm)


def _finite_positive(name, value, case):
    if not (math.isfinite(value) and value > 0):
        raise CalibrationError(f"{name} is not finite and positive: {value!r}", case=case)
    return value


def corpus_ratios(settings: CalibrationSettings):
    """Per-case bilinear, linear and product-law ratios of the seeded corpus."""
    grid = corpus_grid(settings)
    cfg = SolverConfig(grid=grid, dt=settings.T / settings.steps, T=settings.T, alpha=settings.alpha, r=settings.r)
    part = cfg.part
    times = uniform_times(settings.T, cfg.dt)
    bilinear, linear, product = [], [], []
    for i in range(settings.pairs):
        rng = case_rng(settings.seed, i)
        # amplitudes vary over a decade so the corpus is not a single scale
        a1, a2 = 10.0 ** rng.uniform(-1.0, 0.0, size=2)
        f1 = random_field(grid, rng, settings.kmax).scaled(a1)
        f2 = random_field(grid, rng, settings.kmax).scaled(a2)
        case = {"index": i, "seed": settings.seed, "amplitudes": [a1, a2]}
        U1 = linear_trajectory(f1, times)
        U2 = linear_trajectory(f2, times)
        B = bilinear_operator(U1, U2, times, cfg)
        n1 = x_alpha_norm(U1, times, settings.alpha, settings.r, part)
        n2 = x_alpha_norm(U2, times, settings.alpha, settings.r, part)
        nb = x_alpha_norm(B, times, settings.alpha, settings.r, part)
        bilinear.append(_finite_positive("bilinear ratio", nb / (n1 * n2), case))
        lin = linear_x_alpha_norm(f1, settings.T, settings.alpha, settings.r, part, order=settings.time_order)
        linear.append(_finite_positive("linear ratio", lin / fb_norm(f1, -1.0, 1.0, settings.r, part), case))
        product.append(_finite_positive("product-law ratio", product_law_ratio(U1, U2, times, settings.alpha, part), case))
    return {"bilinear": bilinear, "linear": linear, "product": product}


def term_constants(settings: CalibrationSettings):
    """c0 = min over N of the leading-term norm; c_prime fits the J2+J3 norm at the first N."""
    norms = {
        N: term_norms(
            *observed_iterate(N, settings.delta, 1.0, settings.xi_order, settings.quad_order, settings.time_order),
            settings.delta,
        )
        for N in settings.N_list
    }
    c0 = min(norms[N]["J1"] for N in settings.N_list)
    N0 = settings.N_list[0]
    members = DECAY_GROUPS["J2+J3"][0]
    c_prime = sum(norms[N0][m] for m in members) * N0 * 2.0 ** N0
    return (
        _finite_positive("c0", c0, {"N_list": list(settings.N_list)}),
        _finite_positive("c_prime", c_prime, {"N": N0}),
    )


def estimate_constants(settings: CalibrationSettings):
    """Run every corpus and return the constants with per-corpus spreads."""
    ratios = corpus_ratios(settings)
    bilinear, linear, product = ratios["bilinear"], ratios["linear"], ratios["product"]
    c1 = max(bilinear)
    c2 = max(linear)
    c0, c_prime = term_constants(settings)
    constants = {
        "C1": c1,
        "C2": c2,
        "eps": 1.0 / (4.0 * c1 * c2),
        "c0": c0,
        "c_prime": c_prime,
        "product_law": max(product),
    }
    spreads = {
        "bilinear_min": min(bilinear),
        "linear_min": min(linear),
        "product_law_min": min(product),
    }
    return constants, spreads


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def digest_of(text):
    return hashlib.sha256(text.encode()).hexdigest()


def calibrate(path, settings: CalibrationSettings | None = None, overwrite=False):
    """Write the calibration file; identical settings give an identical file."""
    settings = CalibrationSettings() if settings is None else settings
    path = Path(path)
    if path.exists() and not overwrite:
        raise CalibrationError(f"{path} exists; pass overwrite to replace it")
    constants, spreads = estimate_constants(settings)
    text = _canonical(
        {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "settings": settings.to_dict(),
            "constants": constants,
            "corpus": spreads,
        }
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return Calibration(constants, settings.to_dict(), digest_of(text))


def load_calibration(path=None) -> Calibration:
    """Read a calibration file; the packaged one when ``path`` is omitted."""
    if path is None:
        text = resources.files("micropolar_lab").joinpath("data").joinpath(DEFAULT_PATH).read_text()
    else:
        text = Path(path).read_text()
    payload = json.loads(text)
    if payload.get("format") != FORMAT_NAME or payload.get("version") != FORMAT_VERSION:
        raise CalibrationError("not a calibration file of a supported version")
    return Calibration(payload["constants"], payload["settings"], digest_of(text))
