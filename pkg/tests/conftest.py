import warnings

import numpy as np
import pytest

from horizon_pmp.problem import ConvergentFunction, make_grid


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


@pytest.fixture(scope="session")
def grid64():
    return make_grid("log", 64)


def const_fn(grid, v):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return ConvergentFunction.from_callable(grid, lambda t: v, v)


_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    """Collects (number, passed, detail) for the acceptance summary."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
