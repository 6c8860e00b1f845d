import numpy as np
import pytest

from sqvdlm.dlm import StateSpaceSpec
from sqvdlm.series import MonthStamp


def _spd(rng, k, scale=1.0):
    A = rng.normal(size=(k, k))
    return scale * (A @ A.T / k + 0.2 * np.eye(k))


def random_instance(rng, max_T=5, max_m=3, max_q=3, missing=True):
    """Random small state-space model plus data (may include missing values)."""
    T = int(rng.integers(1, max_T + 1))
    m = int(rng.integers(1, max_m + 1))
    q = int(rng.integers(1, max_q + 1))
    F = rng.normal(size=(m, q))
    G = rng.normal(size=(q, q)) * 0.7
    C = rng.normal(size=(q, 12))
    V = _spd(rng, m)
    W = _spd(rng, q)
    x0 = rng.normal(size=q)
    P0 = np.zeros((q, q)) if rng.random() < 0.5 else _spd(rng, q)
    spec = StateSpaceSpec(F, G, C, V, W, x0, P0)
    y = rng.normal(size=(T, m)) * 2
    if missing and rng.random() < 0.5:
        y[rng.random(size=(T, m)) < 0.25] = np.nan
    start_month = int(rng.integers(1, 13))
    months = (start_month - 1 + np.arange(T)) % 12 + 1
    return spec, y, months


@pytest.fixture
def jan2004():
    return MonthStamp(2004, 1)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
