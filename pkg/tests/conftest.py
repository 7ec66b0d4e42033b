import numpy as np
import pytest

from levyobstacle import calibrate_drift, cgmy, variance_gamma

RATE = 0.05
_ACCEPTANCE = []


@pytest.fixture(scope="session")
def vg():
    return variance_gamma(0.1, 0.2, -0.14)


@pytest.fixture(scope="session")
def vg_b(vg):
    return calibrate_drift(vg, RATE)


@pytest.fixture(scope="session")
def cgmy_model():
    return cgmy(1.0, 5.0, 5.0, 0.5)


@pytest.fixture(scope="session")
def spots():
    return np.log([0.8, 0.9, 1.0, 1.1, 1.2])


@pytest.fixture
def criterion():
    """Record one acceptance line; printed now and again in the terminal summary."""
    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + \
            (f" | {detail}" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
