import numpy as np
import pytest

from ttsa.core import MatrixSpec, StepSchedule
from ttsa.gtd import build_gtd, random_mdp

# seeded MDP used by the rate experiments (S=5, d=2, gamma=0.9)
RATE_MDP_SEED = 249


@pytest.fixture
def identity_spec():
    I, Z = np.eye(2), np.zeros((2, 2))
    return MatrixSpec(I, Z, [1.0, 2.0], Z, I, [3.0, 4.0])


@pytest.fixture
def sched():
    return StepSchedule(0.8, 0.5)


@pytest.fixture(scope="session")
def rate_mdp():
    return random_mdp(5, 2, RATE_MDP_SEED, gamma=0.9)


@pytest.fixture(scope="session")
def gtd0(rate_mdp):
    return build_gtd("gtd0", rate_mdp)


@pytest.fixture(scope="session")
def gtd2(rate_mdp):
    return build_gtd("gtd2", rate_mdp)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
