import numpy as np
import pytest

from ntkscaling import distributions as D


@pytest.fixture(scope="session")
def mixture2():
    return D.make_mixture(2, 8, 0.5, 0)


@pytest.fixture(scope="session")
def small_ds(mixture2):
    return D.sample(mixture2, 60, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
