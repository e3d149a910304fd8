import math

import numpy as np
import pytest

from adpmcmc.data import simulate_dataset
from adpmcmc.models import ModelId, Params
from adpmcmc.rng import make_rng

THETA_LOGISTIC = Params((0.15, -0.125, 0.1), 0.47 ** 2, 0.39 ** 2, math.log(1.27))
FLEX_ALLEE = Params((-0.05, 0.0525, -0.0025), 0.2, 0.2, math.log(2.0))

# One representative parameter set per model, all with finite dynamics.
EXAMPLE_PARAMS = {
    ModelId.M0: Params((0.15,), 0.2, 0.2, 0.0),
    ModelId.M1: Params((0.15, -0.05), 0.2, 0.2, 0.5),
    ModelId.M2: THETA_LOGISTIC,
    ModelId.M3: Params((1.0, -0.05, 2.0), 0.2, 0.2, 1.0),
    ModelId.M4: FLEX_ALLEE,
}


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture(scope="session")
def m2_data():
    return simulate_dataset(ModelId.M2, THETA_LOGISTIC, 50, make_rng(2024))


@pytest.fixture(scope="session")
def m0_series():
    p = Params((0.1,), 0.3, 0.4, 0.2)
    return p, simulate_dataset(ModelId.M0, p, 20, make_rng(7)).y


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
