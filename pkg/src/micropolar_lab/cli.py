"""Command-line entry point: ``micropolar-lab <subcommand> [--config FILE] [flags]``.

Every subcommand writes ``report.json`` (deterministic for a given config and
seed), a ``timing.json`` sidecar and its CSV or field artifacts into the output
directory.  Exit status: 0 all criteria pass, 1 a criterion failed, 2 usage or
configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance as acc
from .calibration import CalibrationSettings, calibrate, case_rng, load_calibration, random_field
from .config import RunConfig, load_config
from .errors import (
    BlowUpSuspectedError,
    CalibrationError,
    ConfigError,
    InvalidParameterError,
    InvalidRangeError,
    InvalidScaleError,
    MicropolarError,
)
from .fields import LatticeGrid, read_field, write_field
from .illposedness import grid_cross_check, inflation_experiment
from .littlewood_paley import fb_norm
from .mild_solver import SolverConfig, picard_terms, solve_mild

REPORT_SCHEMA = "micropolar-report"
REPORT_VERSION = 1

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
SPACE_ALIASES = {"fb": "fourier_besov", "besov": "besov_infty", "fourier_besov": "fourier_besov", "besov_infty": "besov_infty"}
USAGE_ERRORS = (ConfigError, InvalidParameterError, InvalidRangeError, InvalidScaleError)


class Run:
    """Collects criteria and artifacts for one subcommand and writes the report."""

    def __init__(self, command, config: RunConfig, out: Path):
        self.command = command
        self.config = config
        self.out = out
        self.criteria = {}
        self.artifacts = []
        self.results = {}
        self.timing = {}
        self._start = time.perf_counter()

    def add(self, name, measured, threshold, passed, seconds=None):
        self.criteria[name] = {"measured": measured, "threshold": threshold, "pass": bool(passed)}
        if seconds is not None:
            self.timing[name] = seconds

    def add_criterion(self, crit: acc.Criterion):
        d = crit.to_dict()
        self.criteria[d["name"]] = {k: d[k] for k in ("measured", "threshold", "pass")}
        self.results[d["name"]] = d["details"]
        self.timing[d["name"]] = crit.seconds

    def path(self, name):
        self.artifacts.append(name)
        return self.out / name

    @property
    def passed(self):
        return all(c["pass"] for c in self.criteria.values())

    def payload(self, complete=True, error=None):
        try:
            cal = load_calibration().digest
        except (CalibrationError, OSError):
            cal = None
        body = {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "command": self.command,
            "config_hash": self.config.digest,
            "config": self.config.to_dict(),
            "provenance": {"code_version": __version__, "calibration_hash": cal},
            "criteria": self.criteria,
            "results": self.results,
            "artifacts": sorted(self.artifacts),
            "pass": self.passed,
            "complete": complete,
        }
        if error is not None:
            body["error"] = error
        return acc._plain(body)

    def write(self, complete=True, error=None):
        self.out.mkdir(parents=True, exist_ok=True)
        text = json.dumps(self.payload(complete, error), sort_keys=True, indent=2) + "\n"
        (self.out / "report.json").write_text(text)
        self.timing["total"] = time.perf_counter() - self._start
        (self.out / "timing.json").write_text(json.dumps(self.timing, sort_keys=True, indent=2) + "\n")
        return text


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _solver_config(config: RunConfig):
    grid = LatticeGrid.cubic(config["grid.points"], config["grid.xi_max"])
    return SolverConfig(
        grid=grid,
        dt=config["solver.dt"],
        T=config["solver.T"],
        alpha=config["solver.alpha"],
        r=config["solver.r"],
        picard_depth=config["solver.picard_depth"],
        dealias_fraction=config["solver.dealias_fraction"],
    )


def _initial_field(config: RunConfig, cfg: SolverConfig, path=None):
    if path is not None:
        f = read_field(path)
        if f.grid != cfg.grid:
            raise ConfigError(f"{path}: field lattice does not match grid.points / grid.xi_max")
        return f
    f = random_field(cfg.grid, case_rng(config["seed"], 0), config["initial.kmax"])
    return f.scaled(config["initial.amplitude"])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_lp_check(run: Run, args):
    c = run.config
    run.add_criterion(acc.partition_of_unity(samples=args.samples or 100_000, seed=c["seed"],
                                             j_min=c["partition.j_min"], j_max=c["partition.j_max"]))


def cmd_semigroup_verify(run: Run, args):
    n = run.config["verify.samples"]
    seed = run.config["seed"]
    for check in (acc.symbol_algebra, acc.semigroup_correctness, acc.decay_rate):
        run.add_criterion(check(samples=n, seed=seed))


def cmd_simulate(run: Run, args):
    cfg = _solver_config(run.config)
    U0 = _initial_field(run.config, cfg, args.initial)
    try:
        traj = solve_mild(U0, cfg)
        complete = True
    except BlowUpSuspectedError as exc:
        traj, complete = exc.partial, False
        run.results["blow_up"] = str(exc)
    files = []
    for k, state in enumerate(traj.states):
        name = f"state_{k:04d}.txt"
        write_field(run.path(name), state)
        files.append(name)
    manifest = {"config_hash": run.config.digest, "times": traj.times.tolist(), "files": files, "complete": complete}
    run.path("manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    d = traj.diagnostics
    _write_csv(run.path("diagnostics.csv"), ("t", "divergence_residual", "hermitian_residual", "fb_norm"),
               zip(traj.times, d["divergence_residual"], d["hermitian_residual"], d["fb_norm"]))
    div = max(d["divergence_residual"])
    herm = max(d["hermitian_residual"])
    run.add("divergence_free", {"max_residual": div}, {"max_residual": 1e-10}, div <= 1e-10)
    run.add("hermitian_symmetry", {"max_residual": herm}, {"max_residual": 1e-10}, herm <= 1e-10)
    run.add("completed", {"steps": len(traj.states) - 1}, {"complete": True}, complete)


def cmd_picard(run: Run, args):
    cfg = _solver_config(run.config)
    f = _initial_field(run.config, cfg, args.initial)
    depth = run.config["solver.picard_depth"]
    terms = picard_terms(f, cfg.T, depth, cfg)
    half = picard_terms(f.scaled(0.5), cfg.T, depth, cfg)
    rows, worst = [], 0.0
    for n, (a, b) in enumerate(zip(terms, half), 1):
        size = float(np.max(np.abs(a.values)))
        err = float(np.max(np.abs(b.values - 0.5 ** n * a.values))) / max(size, 1e-300)
        worst = max(worst, err)
        rows.append((n, fb_norm(a, -1.0, 1.0, cfg.r, cfg.part), err))
        write_field(run.path(f"A{n}.txt"), a)
    _write_csv(run.path("picard_terms.csv"), ("n", "fb_norm", "scaling_error"), rows)
    run.add("n_linearity", {"max_relative_error": worst}, {"max_relative_error": 1e-8}, worst <= 1e-8)


def cmd_inflate(run: Run, args):
    c = run.config
    rep = inflation_experiment(
        c["experiment.N"],
        c["experiment.delta"],
        c["experiment.r"],
        c["experiment.space"],
        t_factor=c["experiment.t_factor"],
        xi_order=c["quadrature.xi_order"],
        quad_order=c["quadrature.gauss_order"],
        time_order=c["quadrature.time_order"],
        seed=c["seed"],
    )
    rep.write_rows(run.path("inflation_points.csv"))
    run.results["inflation"] = rep.to_dict()
    for name, ok in rep.passed.items():
        run.add(name, {"value": ok}, {"value": True}, ok)


def cmd_smalldata(run: Run, args):
    run.add_criterion(acc.small_data_fixed_point(seed=run.config["seed"]))


def cmd_cross_check(run: Run, args):
    refine = run.config["cross_check.refine"]
    N = run.config["experiment.N"]
    delta = run.config["experiment.delta"]
    base = grid_cross_check(N, delta, refine=1)
    run.results["base"] = base.to_dict()
    run.add("deviation", {"deviation": base.deviation}, {"deviation": 0.05}, base.deviation <= 0.05)
    if refine > 1:
        fine = grid_cross_check(N, delta, refine=refine, reference=base.quadrature)
        run.results["refined"] = fine.to_dict()
        run.add("deviation_decreases", {"deviation": fine.deviation}, {"deviation": f"< {base.deviation!r}"},
                fine.deviation < base.deviation)


def cmd_report(run: Run, args):
    numbers = sorted(acc.CRITERIA) if not args.only else sorted(set(args.only))
    for k in numbers:
        if k not in acc.CRITERIA:
            raise ConfigError(f"no criterion {k}")
        crit = acc.CRITERIA[k]()
        run.add_criterion(crit)
        print(crit.line(), flush=True)
    rows = [(name, json.dumps(acc._plain(c["measured"]), sort_keys=True), c["pass"]) for name, c in run.criteria.items()]
    _write_csv(run.path("criteria.csv"), ("criterion", "measured", "pass"), rows)


def cmd_calibrate(run: Run, args):
    c = run.config
    settings = CalibrationSettings(
        seed=c["seed"],
        quad_order=c["quadrature.gauss_order"],
        xi_order=c["quadrature.xi_order"],
        time_order=max(c["quadrature.time_order"], 2),
    )
    target = run.path("calibration.json")
    if target.exists() and not args.overwrite:
        raise ConfigError(f"{target} exists; pass --overwrite to replace it")
    cal = calibrate(target, settings, overwrite=args.overwrite)
    run.results["constants"] = cal.constants
    run.results["calibration_file_hash"] = cal.digest
    finite = all(math.isfinite(v) and v > 0 for v in cal.constants.values())
    run.add("constants_finite_positive", {"value": finite}, {"value": True}, finite)


COMMANDS = {
    "lp-check": (cmd_lp_check, "partition-of-unity and block-orthogonality checks"),
    "semigroup-verify": (cmd_semigroup_verify, "symbol, semigroup and decay-rate checks"),
    "simulate": (cmd_simulate, "march the mild formulation and write checkpoints"),
    "picard": (cmd_picard, "Picard terms A_1..A_n on the lattice"),
    "inflate": (cmd_inflate, "norm-inflation experiment for one N"),
    "smalldata": (cmd_smalldata, "Picard contraction at the calibrated radius"),
    "cross-check": (cmd_cross_check, "quadrature against lattice second iterate"),
    "report": (cmd_report, "run every acceptance criterion"),
    "calibrate": (cmd_calibrate, "estimate and store the empirical constants"),
}


def _float_arg(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="micropolar-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides 'output')")
        p.add_argument("--seed", type=int, help="override 'seed'")
        if name in ("lp-check",):
            p.add_argument("--samples", type=int)
        if name == "semigroup-verify":
            p.add_argument("--samples", type=int, help="override verify.samples")
        if name in ("simulate", "picard"):
            p.add_argument("--initial", type=Path, help="initial field file instead of random data")
        if name in ("inflate", "cross-check"):
            p.add_argument("--N", type=int, dest="N")
            p.add_argument("--delta", type=_float_arg)
        if name == "inflate":
            p.add_argument("--r", type=_float_arg, help="summability index, 'inf' allowed")
            p.add_argument("--space", choices=sorted(SPACE_ALIASES), help="target space (fb = fourier_besov, besov = besov_infty)")
            p.add_argument("--t-factor", type=_float_arg, dest="t_factor")
        if name == "cross-check":
            p.add_argument("--refine", type=int)
        if name == "report":
            p.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
        if name == "calibrate":
            p.add_argument("--overwrite", action="store_true")
    return parser


def _overrides(args):
    def get(name):
        return getattr(args, name, None)

    return {
        "seed": get("seed"),
        "output": str(args.out) if args.out is not None else None,
        "verify.samples": get("samples") if args.command == "semigroup-verify" else None,
        "experiment.N": get("N"),
        "experiment.delta": get("delta"),
        "experiment.r": get("r"),
        "experiment.space": SPACE_ALIASES.get(get("space")),
        "experiment.t_factor": get("t_factor"),
        "cross_check.refine": get("refine"),
    }


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config).with_overrides(_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run = Run(args.command, config, Path(config["output"]))
    run.out.mkdir(parents=True, exist_ok=True)
    handler = COMMANDS[args.command][0]
    try:
        handler(run, args)
    except USAGE_ERRORS as exc:
        run.write(complete=False, error=str(exc))
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        run.write(complete=False, error=str(exc))
        if exc.case is not None:
            print(f"calibration aborted, case: {json.dumps(acc._plain(exc.case), sort_keys=True)}", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MicropolarError, FloatingPointError, ArithmeticError) as exc:
        run.write(complete=False, error=f"{type(exc).__name__}: {exc}")
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    run.write()
    status = "PASS" if run.passed else "FAIL"
    print(f"{args.command}: {status} ({len(run.criteria)} criteria) -> {run.out / 'report.json'}")
    return EXIT_PASS if run.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
