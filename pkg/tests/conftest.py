import numpy as np
import pytest

from modalpp.mixture import MixtureModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def std2():
    """Standard bivariate Gaussian as a one-component mixture."""
    return MixtureModel([1.0], [[0.0, 0.0]], [np.eye(2)])


def one_d(weights, means, variances):
    """Shorthand for 1-d mixtures."""
    return MixtureModel(
        weights, np.asarray(means, float)[:, None], np.asarray(variances, float)[:, None, None]
    )


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
