"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
import re

import pytest

CRITERIA = {
    1: "CLT diffusive d=1 p=0.6",
    2: "joint (S,T) covariance d=2 p=0.5",
    3: "critical regime d=1 p=0.75",
    4: "superdiffusive xi d=1 p=0.9",
    5: "center of mass covariance",
    6: "Gaussian samplers",
    7: "small-ball constant pi^2/8",
    8: "integrated-BM kappa bracket",
    9: "almost-sure CLT",
    10: "RPW law of large numbers and CLT",
    11: "structural oracles",
    12: "RPW to biased-ERW mapping",
}

RESULTS: dict = {}


@pytest.fixture
def record():
    """record(criterion, ok, detail) stores the outcome and returns ok."""

    def _record(number: int, ok: bool, detail: str) -> bool:
        RESULTS[number] = (bool(ok), detail)
        return ok

    return _record


def _criterion(nodeid: str):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_", nodeid)
    return int(m.group(1)) if m else None


def pytest_terminal_summary(terminalreporter):
    outcomes = ("passed", "failed", "error", "skipped")
    ran = {_criterion(r.nodeid) for key in outcomes for r in terminalreporter.stats.get(key, [])}
    ran.discard(None)
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        if n not in ran:
            terminalreporter.write_line(f"NOT RUN  criterion {n:2d} ({name})")
            continue
        ok, detail = RESULTS.get(n, (False, "no result recorded (test errored)"))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n:2d} ({name}): {detail}")
