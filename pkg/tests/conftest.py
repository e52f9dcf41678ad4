import warnings

import numpy as np
import pytest

from rbfcontrol.errors import ConditionOverflow
from rbfcontrol.geometry import generate_nodes

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_condition_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditionOverflow)
        yield


@pytest.fixture(scope="session")
def grid9():
    return generate_nodes(9, layout="grid")


@pytest.fixture(scope="session")
def nodes100():
    return generate_nodes(100)


@pytest.fixture(scope="session")
def nodes622():
    return generate_nodes(622)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
