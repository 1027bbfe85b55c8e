import os
import sys

import numpy as np
import pytest

# make the local oracle helpers importable from every test module
sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = {}


def record_criterion(num, passed, detail):
    """Register one acceptance line; printed in the terminal summary."""
    _CRITERIA[num] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        passed, detail = _CRITERIA[num]
        terminalreporter.write_line(
            "criterion %d: %s  [%s]" % (num, "PASS" if passed else "FAIL", detail))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
