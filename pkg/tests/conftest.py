import numpy as np
import pytest

from witscoord.model import DiscreteModel, ModelParams

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def model16():
    return DiscreteModel.build(ModelParams(1.0, 1.0), 16)


@pytest.fixture(scope="session")
def model12():
    return DiscreteModel.build(ModelParams(1.0, 1.0), 12)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
