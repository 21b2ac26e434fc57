import numpy as np
import pytest

from landislab.geometry import build_domain, discretize


@pytest.fixture
def unit_interval():
    return build_domain({"kind": "interval", "a": 0.0, "b": 1.0})


@pytest.fixture
def unit_disk():
    return build_domain({"kind": "disk", "center": [0.0, 0.0], "radius": 1.0})


@pytest.fixture
def interval_grid(unit_interval):
    return discretize(unit_interval, 1e-3)


@pytest.fixture
def disk_grid(unit_disk):
    return discretize(unit_disk, 0.02)


def interval_closed_form(x):
    return x * (1 - x) / 2


def cosh_closed_form(x):
    return 0.25 * (1 - np.cosh(2 * (x - 0.5)) / np.cosh(1.0))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
