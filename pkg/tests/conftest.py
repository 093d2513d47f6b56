import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record and print one PASS/FAIL line, then fail the test if the check did."""

    def _report(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
