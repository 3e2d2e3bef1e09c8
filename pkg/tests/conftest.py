import pytest

from mpglauber.partition import PartitionSpec

ACCEPTANCE_LINES: list = []


@pytest.fixture
def equal2():
    """Two equal partitions at beta = 1 (critical beta is 2)."""
    return lambda n, beta=1.0: PartitionSpec.equal(2, n, beta)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
