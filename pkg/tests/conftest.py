import sys

import numpy as np
import pytest

from anisoheat.diffusivity import ConstantModel, PiecewiseConstantModel, SmoothModel
from anisoheat.propagator import SpatialGrid


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def grid1d():
    return SpatialGrid(1, 256, 12.0)


@pytest.fixture
def grid2d():
    return SpatialGrid(2, 64, 10.0)


@pytest.fixture
def unit_model():
    return ConstantModel([[1.0]])


@pytest.fixture
def step_model():
    return PiecewiseConstantModel([1.0], [np.eye(1), 3.0 * np.eye(1)])


@pytest.fixture
def smooth_model():
    # a(t) = diag(1 + t, 2)
    return SmoothModel([("poly(1, 1)", np.diag([1.0, 0.0])), ("const", np.diag([0.0, 2.0]))])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
