import csv
import json
import shutil
import subprocess

import pytest

from micropolar_lab import __version__
from micropolar_lab.cli import EXIT_NUMERIC, EXIT_PASS, EXIT_USAGE, main
from micropolar_lab.fields import read_field

SMALL_RUN = """
seed = 3
[solver]
dt = 0.05
T = 0.1
"""


def report(out):
    return json.loads((out / "report.json").read_text())


def test_lp_check(tmp_path):
    assert main(["lp-check", "--out", str(tmp_path), "--samples", "2000"]) == EXIT_PASS
    rep = report(tmp_path)
    assert rep["schema"] == "micropolar-report" and rep["pass"] and rep["complete"]
    assert rep["provenance"]["calibration_hash"]
    assert (tmp_path / "timing.json").exists()


def test_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["semigroup-verify", "--out", str(out), "--samples", "50", "--seed", "4"]) == EXIT_PASS
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert main(["semigroup-verify", "--out", str(b), "--samples", "50", "--seed", "5"]) == EXIT_PASS
    assert (a / "report.json").read_bytes() != (b / "report.json").read_bytes()


def test_simulate_writes_checkpoints(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(SMALL_RUN)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_PASS
    manifest = json.loads((out / "manifest.json").read_text())
    rep = report(out)
    assert rep["config"]["solver.T"] == 0.1
    states = sorted(out.glob("state_*.txt"))
    assert len(states) == 3
    last = read_field(states[-1])
    assert last.real_valued and last.grid.n == (16, 16, 16)
    with open(out / "diagnostics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 and float(rows[-1]["divergence_residual"]) <= 1e-10
    assert manifest


def test_simulate_from_initial_file(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(SMALL_RUN)
    first = tmp_path / "first"
    assert main(["simulate", "--config", str(cfg), "--out", str(first)]) == EXIT_PASS
    start = sorted(first.glob("state_*.txt"))[0]
    again = tmp_path / "again"
    assert main(["simulate", "--config", str(cfg), "--out", str(again), "--initial", str(start)]) == EXIT_PASS
    for a, b in zip(sorted(first.glob("state_*.txt")), sorted(again.glob("state_*.txt"))):
        assert a.read_bytes() == b.read_bytes()


def test_picard(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(SMALL_RUN)
    assert main(["picard", "--config", str(cfg), "--out", str(tmp_path / "p")]) == EXIT_PASS
    assert (tmp_path / "p" / "A3.txt").exists()


@pytest.mark.parametrize("space", ["fb", "besov"])
def test_inflate(tmp_path, space):
    assert main(["inflate", "--out", str(tmp_path), "--N", "3", "--space", space]) in (0, 1)
    rep = report(tmp_path)
    assert rep["config"]["experiment.space"] in ("fourier_besov", "besov_infty")
    assert rep["results"]["inflation"]["ratios"]["u2"] > 0
    assert (tmp_path / "inflation_points.csv").exists()


def test_usage_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\npointz = 16\n")
    assert main(["lp-check", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert main(["report", "--only", "99", "--out", str(tmp_path / "y")]) == EXIT_USAGE
    assert not report(tmp_path / "y")["complete"]
    assert main(["inflate", "--N", "0", "--out", str(tmp_path / "z")]) == EXIT_USAGE


def test_unresolvable_cross_check(tmp_path):
    assert main(["cross-check", "--N", "5", "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert "error" in report(tmp_path)


def test_calibrate_keeps_existing_file(tmp_path):
    (tmp_path / "calibration.json").write_text("keep")
    assert main(["calibrate", "--out", str(tmp_path)]) == EXIT_USAGE
    assert (tmp_path / "calibration.json").read_text() == "keep"


def test_report_single_criterion(tmp_path, capsys):
    assert main(["report", "--only", "1", "--out", str(tmp_path)]) == EXIT_PASS
    assert "[PASS]  1" in capsys.readouterr().out
    assert (tmp_path / "criteria.csv").exists()


def test_small_data(tmp_path):
    assert main(["smalldata", "--out", str(tmp_path)]) == EXIT_PASS
    assert report(tmp_path)["criteria"]["small-data fixed point"]["pass"]


@pytest.mark.skipif(shutil.which("micropolar-lab") is None, reason="console script not installed")
def test_console_script():
    out = subprocess.run(["micropolar-lab", "--version"], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == __version__
