"""Shared fixtures; collects the per-criterion verdict lines of the acceptance suite."""

import pytest

CRITERIA: dict[str, str] = {}


def record(number: int, passed: bool, text: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {text}"
    CRITERIA[f"{number:02d}"] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[key])


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20170601)
