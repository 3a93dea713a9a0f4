import numpy as np
import pytest

from linsec import Dataset, LinearModel, RegKind


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_model(w, b=0.0, reg=RegKind.L2):
    return LinearModel(np.asarray(w, dtype=float), float(b), reg, {"C": 1.0})


def make_data(X, y, meta=None):
    return Dataset(np.asarray(X, dtype=float), np.asarray(y, dtype=float), meta)


# one summary line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
