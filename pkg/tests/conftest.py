import pytest

from schelling_stability.lattice import TorusGrid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid3():
    return TorusGrid(3)


@pytest.fixture(scope="session")
def grid4():
    return TorusGrid(4)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
