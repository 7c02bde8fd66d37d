"""Shared pytest hooks: per-criterion summary lines for the acceptance suite."""

import re

CRITERIA = {
    1: "order-2 convergence on scalar_decay and const_linear (slope in [1.7, 2.3], < 10 s)",
    2: "equilibrium exactness of the exponential driver on const_linear (<= 1e-10, < 1 s)",
    3: "truncation algebra of the series transition matrices",
    4: "forward-sensitivity vs finite-difference oracle agreement on chua (<= 1e-3, < 5 s)",
    5: "chua accuracy ordering: median re_pbsr <= (1/3) median re_exp (< 10 s)",
    6: "runtime scaling ordering on random linear systems (b and n=60 runtimes, < 5 min)",
    7: "equilibrium-switch logic properties",
    8: "invariant suite: zero start, Jacobian consistency, CSV round-trip, power-law recovery",
}

_PATTERN = re.compile(r"test_criterion_(\d+)")
_outcomes: dict[int, str] = {}


def pytest_runtest_logreport(report):
    match = _PATTERN.search(report.nodeid)
    if not match or "test_acceptance" not in report.nodeid:
        return
    number = int(match.group(1))
    if report.when == "call":
        _outcomes[number] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.skipped:
        _outcomes[number] = "SKIP"
    elif report.when == "setup" and report.failed:
        _outcomes[number] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        outcome = _outcomes.get(number)
        if outcome is None:
            continue
        terminalreporter.write_line(f"criterion {number}: {outcome} — {CRITERIA[number]}")
