import time
from contextlib import contextmanager

import pytest

# (criterion, passed, detail, seconds) for the acceptance summary
ACCEPTANCE: list[tuple[str, bool, str, float]] = []


class Criterion:
    def __init__(self, name):
        self.name = name
        self.detail = ""

    def note(self, text):
        self.detail = text


@contextmanager
def criterion(name):
    c = Criterion(name)
    t0 = time.perf_counter()
    try:
        yield c
    except BaseException as exc:
        msg = c.detail or f"{type(exc).__name__}: {exc}".splitlines()[0]
        ACCEPTANCE.append((name, False, msg, time.perf_counter() - t0))
        raise
    ACCEPTANCE.append((name, True, c.detail, time.perf_counter() - t0))


@pytest.fixture
def accept():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail, secs in ACCEPTANCE:
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {name} ({secs:.1f} s) {detail}".rstrip())
