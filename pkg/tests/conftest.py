import numpy as np
import pytest

from palmgrasp.acceptance import Context
from palmgrasp.similarity import Thresholds
from palmgrasp.tactile import TactileSim

# calibrated with the default simulator and seed 0; test_acceptance re-derives them
FROZEN_THRESHOLDS = Thresholds(0.8, 0.8297143744478904)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ctx():
    c = Context(seed=0, workers=1)
    yield c
    c.close()


@pytest.fixture(scope="session")
def sim():
    return TactileSim()


@pytest.fixture(scope="session")
def thresholds():
    return FROZEN_THRESHOLDS


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
