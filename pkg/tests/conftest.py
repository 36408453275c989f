import math

import pytest

from pivotpend import ConstantAcceleration, HarmonicSum, PendulumParams, Polynomial, Zero

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def params():
    return PendulumParams(g=9.8, l=1.0)


@pytest.fixture
def zero():
    return Zero()


@pytest.fixture
def forced():
    """Small harmonic pivot used for the periodic-orbit examples."""
    return HarmonicSum.single(0.01, 2 * math.pi)


@pytest.fixture
def shaken():
    return HarmonicSum.single(0.05, 2 * math.pi)


ALL_PROFILES = [
    Zero(),
    Polynomial((0.3, -0.2, 0.5, 0.1)),
    Polynomial((0.0, 1.0)),
    HarmonicSum.single(1.0, 2.0),
    HarmonicSum.single(0.05, 2 * math.pi, 0.4),
    HarmonicSum(((0.02, 3.0, 0.1), (0.01, 4.5, -1.0))),
    ConstantAcceleration(9.8),
    ConstantAcceleration(-2.5),
]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
