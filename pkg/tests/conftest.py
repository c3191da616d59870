import time

import numpy as np
import pytest

from mmcsim import ReferenceMode, Scenario, run_closed_loop, table1_params, table2_params

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def report():
    """Record and print one pass/fail line for an acceptance criterion."""

    def _report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return _report


@pytest.fixture(scope="session")
def p1():
    return table1_params()


@pytest.fixture(scope="session")
def p2():
    return table2_params()


@pytest.fixture(scope="session")
def timed_closed_loop_runs():
    """The two standard 3.5 s runs with their wall-clock cost in seconds."""
    runs = {}
    for kind in ("optimal", "constant"):
        start = time.perf_counter()
        trace = run_closed_loop(Scenario(reference=ReferenceMode(kind)))
        runs[kind] = (trace, time.perf_counter() - start)
    return runs


@pytest.fixture(scope="session")
def closed_loop_runs(timed_closed_loop_runs):
    return {kind: trace for kind, (trace, _) in timed_closed_loop_runs.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
