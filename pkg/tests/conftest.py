from __future__ import annotations

import contextlib
import time

import pytest

_CRITERIA: list[str] = []


@contextlib.contextmanager
def _record(number: int, title: str):
    start = time.perf_counter()
    notes: list[str] = []
    try:
        yield notes
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        line = f"[{number}] FAIL {title} ({elapsed:.2f} s): {reason}"
        _CRITERIA.append(line)
        print(line)
        raise
    elapsed = time.perf_counter() - start
    line = f"[{number}] PASS {title} ({elapsed:.2f} s)" + (f": {'; '.join(notes)}" if notes else "")
    _CRITERIA.append(line)
    print(line)


@pytest.fixture
def criterion():
    """``with criterion(n, title) as notes:`` records one pass/fail line for the summary."""
    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s[1:s.index("]")])):
            terminalreporter.write_line(line)
