import contextlib
import time

import pytest

_CRITERIA = {}


@contextlib.contextmanager
def _record(number, title):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        _CRITERIA[number] = f"criterion {number:>2} FAIL  {title} ({elapsed:.2f}s): {msg}"
        print(_CRITERIA[number])
        raise
    else:
        elapsed = time.perf_counter() - start
        _CRITERIA[number] = f"criterion {number:>2} PASS  {title} ({elapsed:.2f}s)"
        print(_CRITERIA[number])


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion's outcome."""
    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
