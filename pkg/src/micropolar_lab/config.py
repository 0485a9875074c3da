"""Run configuration: a flat TOML file of dotted keys checked against a fixed schema."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import tomli

from .errors import ConfigError


@dataclass(frozen=True)
class Option:
    kind: type
    default: object
    check: object = None
    help: str = ""

    def validate(self, key, value):
        if self.kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if self.kind is int and isinstance(value, bool) or not isinstance(value, self.kind):
            raise ConfigError(f"{key}: expected {self.kind.__name__}, got {type(value).__name__}")
        if self.check is not None:
            ok, rule = self.check
            if not ok(value):
                raise ConfigError(f"{key}: {value!r} violates {rule}")
        return value


def _between(lo, hi, closed=True):
    if closed:
        return (lambda v: lo <= v <= hi), f"{lo} <= value <= {hi}"
    return (lambda v: lo < v < hi), f"{lo} < value < {hi}"


def _positive():
    return (lambda v: v > 0 and math.isfinite(v)), "value > 0"


def _exponent():
    return (lambda v: v >= 1), "value >= 1 (inf allowed)"


def _even_points():
    return (lambda v: v >= 8 and v % 2 == 0 and v <= 512), "even, 8 <= value <= 512"


SCHEMA = {
    "seed": Option(int, 0, ((lambda v: 0 <= v < 2 ** 64), "0 <= value < 2^64"), "root of every random stream"),
    "output": Option(str, "out", None, "output directory"),
    "grid.points": Option(int, 16, _even_points(), "lattice points per axis"),
    "grid.xi_max": Option(float, 8.0, _positive(), "lattice half-extent in frequency"),
    "partition.j_min": Option(int, -4, _between(-30, 30), "lowest dyadic block"),
    "partition.j_max": Option(int, 10, _between(-30, 30), "highest dyadic block"),
    "solver.dt": Option(float, 0.01, _positive(), "time step"),
    "solver.T": Option(float, 0.2, _positive(), "final time"),
    "solver.alpha": Option(float, 0.5, _between(0.0, 1.0, closed=False), "X^alpha exponent"),
    "solver.r": Option(float, 2.0, _exponent(), "Fourier-Besov summability index"),
    "solver.picard_depth": Option(int, 3, _between(1, 8), "number of Picard terms"),
    "solver.dealias_fraction": Option(float, 2.0 / 3.0, ((lambda v: 0 < v <= 1), "0 < value <= 1"), "kept fraction of the lattice"),
    "initial.kmax": Option(int, 2, _between(1, 64), "max-norm spectral radius of random data"),
    "initial.amplitude": Option(float, 0.5, _positive(), "FB^{-1}_{1,2} norm of random data"),
    "experiment.N": Option(int, 4, _between(1, 12), "data index"),
    "experiment.delta": Option(float, 0.05, _between(0.0, 1.0, closed=False), "data amplitude"),
    "experiment.r": Option(float, math.inf, _exponent(), "summability index of the data norm"),
    "experiment.space": Option(str, "fourier_besov", ((lambda v: v in ("fourier_besov", "besov_infty")), "fourier_besov or besov_infty"), "target space"),
    "experiment.t_factor": Option(float, 1.0, _positive(), "observation time in units of t_N"),
    "quadrature.gauss_order": Option(int, 4, _between(2, 16), "Gauss points per axis on data cubes"),
    "quadrature.xi_order": Option(int, 4, _between(2, 16), "Gauss points per axis on the observation box"),
    "quadrature.time_order": Option(int, 6, _between(2, 16), "Gauss points per time panel"),
    "verify.samples": Option(int, 1000, _between(1, 10 ** 7), "random samples for symbol checks"),
    "cross_check.refine": Option(int, 1, _between(1, 4), "lattice refinement factor"),
}


LOCATION_KEYS = ("output",)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name):
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def with_overrides(self, overrides):
        merged = dict(self.values)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            merged[key] = SCHEMA[key].validate(key, value)
        _cross_checks(merged)
        return RunConfig(merged)

    def canonical(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def to_dict(self):
        """Every setting that affects results; the output directory does not."""
        return {k: _jsonable(v) for k, v in sorted(self.values.items()) if k not in LOCATION_KEYS}


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _flatten(table, prefix=""):
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        else:
            yield name, value


def _line_of(text, key):
    """1-based line on which a dotted key is assigned, best effort."""
    leaf = re.escape(key.split(".")[-1])
    full = re.escape(key)
    for pattern in (rf"^\s*{full}\s*=", rf"^\s*{leaf}\s*="):
        for i, line in enumerate(text.splitlines(), 1):
            if re.match(pattern, line):
                return i
    return None


def _cross_checks(values):
    if values["partition.j_min"] >= values["partition.j_max"]:
        raise ConfigError("partition.j_min must be below partition.j_max")
    if values["solver.dt"] > values["solver.T"]:
        raise ConfigError("solver.dt must not exceed solver.T")


def defaults() -> RunConfig:
    return RunConfig({k: opt.default for k, opt in SCHEMA.items()})


def parse_config(text, source="<config>") -> RunConfig:
    try:
        table = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = defaults().values
    for key, value in _flatten(table):
        line = _line_of(text, key)
        where = f"{source}:{line}" if line else source
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown key {key!r}")
        try:
            values[key] = SCHEMA[key].validate(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    try:
        _cross_checks(values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return RunConfig(values)


def load_config(path=None) -> RunConfig:
    if path is None:
        return defaults()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))


def schema_table():
    """(key, type, default, rule, help) rows for documentation."""
    rows = []
    for key, opt in SCHEMA.items():
        rule = opt.check[1] if opt.check else ""
        rows.append((key, opt.kind.__name__, _jsonable(opt.default), rule, opt.help))
    return rows
