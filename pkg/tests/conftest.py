import numpy as np
import pytest

from riskalloc.exp_pricing import RiskAversionSchedule
from riskalloc.market import RateCurve
from riskalloc.mortality import ClaimProfile, MortalityCurve

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20071122)


@pytest.fixture
def two_period():
    """alpha = (1, 1), q = (0.5, 0.5), z = (1, 1, 0), zero rates."""
    return (
        RiskAversionSchedule([1.0, 1.0]),
        MortalityCurve([0.5, 0.5]),
        ClaimProfile([1.0, 1.0, 0.0]),
        RateCurve([0.0, 0.0]),
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
