import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record a one-line pass/fail verdict for an acceptance criterion."""

    def record(number, name, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
