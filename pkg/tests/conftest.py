import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from diracgap.core import Grid, Nonlinearity  # noqa: E402
from diracgap.dirac_op import DiracOperator  # noqa: E402
from diracgap.soliton import continue_branch  # noqa: E402

_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, text in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture(scope="session")
def report():
    """report(num, ok, text) records one acceptance line and prints it."""

    def _report(num, ok, text):
        _ACCEPTANCE.append((num, bool(ok), text))
        print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {text}")
        return ok

    return _report


@pytest.fixture(scope="session")
def grid():
    return Grid(-40.0, 40.0, 512)


@pytest.fixture(scope="session")
def ref_op(grid):
    return DiracOperator.reference(grid)


@pytest.fixture(scope="session")
def free_op(grid):
    return DiracOperator.free(grid)


@pytest.fixture(scope="session")
def small_amps():
    return np.geomspace(1e-2, 1e-1, 11)


@pytest.fixture(scope="session")
def bragg_branch(ref_op, small_amps):
    return continue_branch(ref_op, Nonlinearity.bragg_quartic(1.0), small_amps)


@pytest.fixture(scope="session")
def sextic_branch(ref_op, small_amps):
    return continue_branch(ref_op, Nonlinearity.feshbach_sextic(1.0), small_amps)


@pytest.fixture(scope="session")
def sextic_large(ref_op):
    """Sextic branch at moderate amplitude, used by the evolution tests."""
    return continue_branch(ref_op, Nonlinearity.feshbach_sextic(1.0), np.linspace(0.2, 0.6, 9))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
