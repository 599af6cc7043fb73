import numpy as np
import pytest

from homotrack.dynamics import MotionConfig
from homotrack.observation import BEARING_RANGE, ObservationConfig

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def motion():
    return MotionConfig()


@pytest.fixture
def linear_obs():
    return ObservationConfig()


@pytest.fixture
def bearing_obs():
    return ObservationConfig(BEARING_RANGE, 1e-4, 1.0)


@pytest.fixture
def report():
    """Record a one-line acceptance verdict printed in the terminal summary."""

    def _report(name, passed, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
