import numpy as np
import pytest

from contractlearn.env_core import bernoulli_quadratic, smooth_quadratic


@pytest.fixture
def desk_env():
    """Binary outcome, success prob a, cost a^2, effort cap 1."""
    return bernoulli_quadratic(lam0=2.0, E=1.0)


@pytest.fixture
def smooth_env():
    return smooth_quadratic((0.0, 0.5, 1.0), (3.0, 2.0), lam0=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
