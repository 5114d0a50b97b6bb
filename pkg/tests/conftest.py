import os

import numpy as np
import pytest

from tempus.state import MomentumGrid

CRITERIA = {
    1: "normalization of every kernel family",
    2: "time-shift covariance",
    3: "positivity and current backflow",
    4: "classical limit of the mean arrival time",
    5: "unitarity, eigenphases and matching oracles",
    6: "free-limit reductions",
    7: "minimal variance and quadratic excess",
    8: "Schmidt round-trip and decomposition independence",
    9: "spectral moments vs time quadrature",
    10: "conditional and operator normalization",
    11: "reflection invariance and time-reversal mirror",
}

_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_logreport(report):
    n = getattr(report, "criterion", None)
    if n is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(n, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, name in CRITERIA.items():
        res = _outcomes.get(n)
        if not res:
            status = "NOT RUN"
        elif all(r == "passed" for r in res):
            status = "PASS"
        else:
            status = "FAIL"
        tr.write_line(f"[{status:>7}] criterion {n:2d}: {name} ({len(res or [])} checks)")


@pytest.fixture(scope="session")
def wide_grid():
    return MomentumGrid.symmetric(10.0, 4000)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session", autouse=True)
def _single_thread():
    os.environ.setdefault("TEMPUS_THREADS", "1")
