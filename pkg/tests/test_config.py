import math

import pytest

from micropolar_lab.config import SCHEMA, defaults, load_config, parse_config, schema_table
from micropolar_lab.errors import ConfigError


def test_defaults_cover_schema():
    cfg = defaults()
    assert set(cfg.values) == set(SCHEMA)
    assert cfg["grid.points"] == 16 and cfg["experiment.r"] == math.inf


def test_tables_and_dotted_keys_agree():
    a = parse_config("[solver]\ndt = 0.005\n[experiment]\nr = inf\n")
    b = parse_config('solver.dt = 0.005\nexperiment.r = inf\n')
    assert a.digest == b.digest
    assert a["solver.dt"] == 0.005


def test_integers_promote_to_floats():
    assert parse_config("grid.xi_max = 4\n")["grid.xi_max"] == 4.0


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("seed = 1\n\n[grid]\npointz = 16\n", 4, "unknown key 'grid.pointz'"),
        ("[grid]\npoints = 15\n", 2, "violates"),
        ("[solver]\nalpha = 1.5\n", 2, "violates"),
        ("[solver]\npicard_depth = true\n", 2, "expected int"),
        ("[experiment]\nspace = 'sobolev'\n", 2, "violates"),
    ],
)
def test_bad_entries_name_their_line(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "run.toml")
    assert f"run.toml:{line}:" in str(info.value)
    assert fragment in str(info.value)


def test_cross_field_rules():
    with pytest.raises(ConfigError):
        parse_config("partition.j_min = 3\npartition.j_max = 3\n")
    with pytest.raises(ConfigError):
        parse_config("solver.dt = 1.0\nsolver.T = 0.5\n")


def test_malformed_toml():
    with pytest.raises(ConfigError):
        parse_config("seed = \n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.toml")


def test_overrides_validate_and_skip_none():
    cfg = defaults().with_overrides({"seed": 5, "experiment.N": None})
    assert cfg["seed"] == 5 and cfg["experiment.N"] == 4
    with pytest.raises(ConfigError):
        defaults().with_overrides({"experiment.N": 0})
    with pytest.raises(ConfigError):
        defaults().with_overrides({"nope": 1})


def test_digest_ignores_output_directory():
    a = defaults().with_overrides({"output": "a"})
    b = defaults().with_overrides({"output": "b"})
    assert a.digest == b.digest
    assert a.digest != defaults().with_overrides({"seed": 1}).digest
    assert "output" not in a.to_dict()


def test_schema_table_rows():
    rows = schema_table()
    assert len(rows) == len(SCHEMA)
    assert all(len(r) == 5 for r in rows)
