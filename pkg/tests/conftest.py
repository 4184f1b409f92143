import numpy as np
import pytest

from hkspectral.hodge import KahlerStructure
from hkspectral.torus_forms import Bivector, Grid

TERMS = [
    {"k": [1, 0, 0, 0], "cos": 1.0},
    {"k": [0, 0, 1, 0], "cos": 1.0},
    {"k": [1, 0, 0, 1], "sin": 0.5},
]


@pytest.fixture(scope="session")
def grid8():
    return Grid(8)


@pytest.fixture(scope="session")
def flat8(grid8):
    return KahlerStructure.flat(grid8)


@pytest.fixture(scope="session")
def perturbed8(grid8):
    return KahlerStructure.from_potential(grid8, TERMS, amplitude=0.003)


@pytest.fixture(scope="session")
def sigma8(grid8):
    return Bivector.constant(grid8, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import SUMMARY
    except ImportError:
        return
    if SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in SUMMARY:
            terminalreporter.write_line(line)
