import sys

import numpy as np
import pytest

from persistmon import kernel


@pytest.fixture
def h_manual():
    """The hand-set starting hyperparameters: sigma_n2=e^-2, sigma_f2=e^2, l=(e, e)."""
    return kernel.Hyperparameters(-2.0, 2.0, (1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    rows = getattr(mod, "RESULTS", [])
    if rows:
        terminalreporter.section("acceptance criteria")
        for row in rows:
            terminalreporter.write_line(row)
