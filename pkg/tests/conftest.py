import math

import numpy as np
import pytest

from obl.curve import Ellipse, FourierOval, NormalBump, PerturbedOval

TWO_PI = 2 * math.pi


@pytest.fixture(scope="session")
def circle():
    return FourierOval(1.0)


@pytest.fixture(scope="session")
def ellipse():
    return Ellipse(2.0, 1.0)


@pytest.fixture(scope="session")
def trefoil():
    """R = 1 + 0.1 cos 3 phi."""
    return FourierOval(1.0, ((3, 0.1, 0.0),))


@pytest.fixture(scope="session")
def oval_zoo():
    """Five ovals of different families used by several property tests."""
    return [
        FourierOval(1.0, ((3, 0.1, 0.0),)),
        FourierOval(1.3, ((2, 0.2, 0.1), (5, -0.05, 0.03))),
        FourierOval(0.8, ((4, 0.15, -0.1),)),
        Ellipse(2.0, 1.0),
        PerturbedOval(Ellipse(1.5, 1.0), (NormalBump(1.0, 0.4, 0.05),)),
    ]


def wrap(d):
    """Signed angular difference reduced to (-pi, pi]."""
    return np.remainder(np.asarray(d) + math.pi, TWO_PI) - math.pi


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
