from __future__ import annotations

import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def _report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[number] = line
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        terminalreporter.write_line(store[number])
