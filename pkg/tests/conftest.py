import time
from contextlib import contextmanager

import pytest

_RESULTS: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion():
    """Context manager recording a PASS/FAIL line for one acceptance criterion."""

    @contextmanager
    def record(number: int, title: str):
        start = time.perf_counter()
        notes: list[str] = []
        try:
            yield notes
        except BaseException as exc:
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            _RESULTS[number] = ("FAIL", f"{title} ({msg})")
            raise
        detail = "; ".join(notes + [f"{time.perf_counter() - start:.2f} s"])
        _RESULTS[number] = ("PASS", f"{title} ({detail})")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, text = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {text}")
