import numpy as np
import pytest

from hmlab import DomainGrid, Region, TargetChart


@pytest.fixture
def sphere2():
    return TargetChart(2, "sphere")


@pytest.fixture
def line_grid():
    return DomainGrid(Region.box([[-1.0, 1.0]]), 0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, printed after the test session.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
