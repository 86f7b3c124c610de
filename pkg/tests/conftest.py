import numpy as np
import pytest

from rpls import spd


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sym(R, rng, scale=1.0):
    A = rng.standard_normal((R, R)) * scale
    return (A + A.T) / 2


def random_spd(R, rng, condition=10.0):
    return spd.random_spd(R, rng, condition)


def random_invertible(R, rng, max_condition=1e3):
    """Random matrix with condition number at most ``max_condition``."""
    U, _ = np.linalg.qr(rng.standard_normal((R, R)))
    V, _ = np.linalg.qr(rng.standard_normal((R, R)))
    s = np.exp(rng.uniform(0, np.log(max_condition), R))
    return (U * s) @ V.T


ACCEPTANCE = []


@pytest.fixture
def accept():
    """Record one acceptance criterion's outcome and fail the test if it missed."""
    def record(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
