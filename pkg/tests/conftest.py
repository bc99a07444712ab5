import numpy as np
import pytest

from molmix.codec import CompoundLibrary

# (criterion number, PASS/FAIL line) collected by the acceptance suite
ACCEPTANCE_LINES: list[tuple[int, str]] = []


@pytest.fixture
def ibex_library():
    return CompoundLibrary.synthetic(5)


@pytest.fixture
def sparse_library():
    return CompoundLibrary.synthetic(256, block_size=16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log():
    def record(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}  {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
