import numpy as np
import pytest
from hypothesis import settings

from crossimpact import Grid, MarketParams, PropagatorSpec

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

A_DIAG = np.array([[0.06, 0.0], [0.0, 0.06]])
A_FULL = np.array([[0.06, 0.05], [0.05, 0.06]])
LAMBDA = np.diag([0.03, 0.03])

ACCEPTANCE = {}


@pytest.fixture
def liquidation_market():
    """Two-asset liquidation of the illustration section."""
    return MarketParams(Lambda=LAMBDA, X0=[10.0, 0.0], T=10.0, varrho=4.0, Pi=np.eye(2))


@pytest.fixture
def exp_full():
    return PropagatorSpec.exponential(A_FULL, 0.5)


@pytest.fixture
def grid50():
    return Grid(50, 10.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
