from __future__ import annotations

import pytest

from semibeltrami.grid import make_grid

# one line per acceptance criterion, printed after the run
CRITERIA: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(CRITERIA[number])


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])


@pytest.fixture(scope="session")
def g64():
    return make_grid(64, 2.0)


@pytest.fixture(scope="session")
def g128():
    return make_grid(128, 2.0)


@pytest.fixture(scope="session")
def g256():
    return make_grid(256, 2.0)
