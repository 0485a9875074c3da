import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from micropolar_lab.calibration import random_field
from micropolar_lab.fields import LatticeGrid

settings.register_profile(
    "lab",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("lab")


def philox(seed):
    return np.random.Generator(np.random.Philox(key=seed))


@pytest.fixture
def rng():
    return philox(1234)


@pytest.fixture(scope="session")
def grid16():
    return LatticeGrid.cubic(16, 8.0)


@pytest.fixture(scope="session")
def grid8():
    return LatticeGrid.cubic(8, 4.0)


@pytest.fixture
def smooth_field(grid16):
    return random_field(grid16, philox(7), 2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus():
    """Ratios of the packaged calibration corpus, replayed once per session."""
    from micropolar_lab.calibration import CalibrationSettings, corpus_ratios, load_calibration

    cal = load_calibration()
    return cal, corpus_ratios(CalibrationSettings(**{**cal.settings, "N_list": tuple(cal.settings["N_list"])}))
