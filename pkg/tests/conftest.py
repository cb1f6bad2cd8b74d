import mpmath
import pytest

mpmath.mp.dps = 40

# one summary line per acceptance criterion, shown at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def mp():
    return mpmath.mp


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split(":", 1)[0]):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES
