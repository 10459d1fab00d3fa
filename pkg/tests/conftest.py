import time

import pytest

_LINES = []


class CriterionReport:
    """Times one acceptance criterion and records its pass/fail line."""

    def __init__(self, label: str, budget: float):
        self.label, self.budget = label, budget
        self.start = time.perf_counter()

    def finish(self, ok: bool, detail: str) -> bool:
        elapsed = time.perf_counter() - self.start
        in_time = elapsed < self.budget
        status = "PASS" if ok and in_time else "FAIL"
        line = f"criterion {self.label}: {status} | {detail} | {elapsed:.1f} s of {self.budget:.0f} s"
        _LINES.append(line)
        print(line)
        return ok and in_time


@pytest.fixture
def criterion():
    return CriterionReport


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
