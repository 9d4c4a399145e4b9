"""Shared fixtures: acceptance-criterion recording and reporting."""

import pytest

_acceptance_lines = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert."""

    def _record(number: int, description: str, ok: bool, detail: str = ""):
        line = (f"[{'PASS' if ok else 'FAIL'}] criterion {number}: "
                f"{description}" + (f" ({detail})" if detail else ""))
        _acceptance_lines.append(line)
        assert ok, line

    return _record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
