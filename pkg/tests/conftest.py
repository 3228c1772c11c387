import numpy as np
import pytest

from liftq import iq, twostate
from liftq.grids import PolicyGrid, SimplexGrid

CRITERIA_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return twostate.TwoStateParams(lambda0=0.5, lambda1=0.8, p=0.6, penalty=5.0, gamma=0.5)


@pytest.fixture(scope="session")
def env(params):
    return twostate.build_env(params)


@pytest.fixture(scope="session")
def grids20():
    return SimplexGrid(2, 20), PolicyGrid(2, 2, 20)


@pytest.fixture(scope="session")
def model20(env, grids20):
    return iq.build_lifted_model(env, *grids20)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
