import contextlib
import os
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, os.path.dirname(__file__))

DATA = Path(__file__).parent / "data"
_criteria: list[str] = []


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def criterion():
    """``with criterion(3, "gradient integrity"):`` records one PASS/FAIL line."""

    @contextlib.contextmanager
    def track(number, title):
        start = time.perf_counter()
        status, detail = "PASS", ""
        try:
            yield
        except BaseException as exc:
            status, detail = "FAIL", f" ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
            raise
        finally:
            line = f"criterion {number:>2} {status}  {title}  [{time.perf_counter() - start:.1f}s]{detail}"
            _criteria.append(line)
            print(line)

    return track


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
