import numpy as np
import pytest
from hypothesis import settings

from latticedet.constellation import make_qam
from latticedet.detect import DetectionProblem
from latticedet.sim import complex_normal, snr_to_rho

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def qpsk():
    return make_qam(4)


@pytest.fixture(scope="session")
def qam16():
    return make_qam(16)


def make_problem(rng, n, m, c, snr_db=None):
    if snr_db is None:
        snr_db = rng.uniform(0, 20)
    rho = snr_to_rho(snr_db, m)
    h = complex_normal(rng, (n, m))
    idx = rng.integers(c.order, size=m)
    y = h @ c.points[idx] + rho * complex_normal(rng, n)
    return DetectionProblem(h, y, rho), idx
