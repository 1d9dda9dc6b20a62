import numpy as np
import pytest

from splitlogit import Dataset


def make_data(n=40, p=10, seed=0, k_active=3, scale=1.0, balanced=False):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    k_active = min(k_active, p)
    beta[:k_active] = scale * rng.choice([-1.0, 1.0], k_active)
    prob = 1.0 / (1.0 + np.exp(-(x @ beta)))
    y = np.where(rng.random(n) < prob, 1.0, -1.0)
    if balanced:
        y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    if np.all(y == y[0]):
        y[0] = -y[0]
    return Dataset.from_raw_quiet(x, y)


@pytest.fixture
def small_data():
    return make_data()


def correlated_features(n=60, p=12, seed=3):
    """Two correlated clusters of signal plus noise columns."""
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((n, 2))
    x = 0.3 * rng.standard_normal((n, p))
    x[:, 0:3] += f[:, [0]]
    x[:, 3:6] += f[:, [1]]
    eta = 1.5 * f[:, 0] - 1.5 * f[:, 1]
    y = np.where(rng.random(n) < 1 / (1 + np.exp(-eta)), 1.0, -1.0)
    return Dataset.from_raw_quiet(x, y)


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    """Register one acceptance result; printed at the end of the session."""
    line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
