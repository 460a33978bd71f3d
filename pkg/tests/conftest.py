import pytest

from ellitrap import trap_model
from ellitrap.crystal import HarmonicTrap

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def fig2_trap():
    """88Sr+ at the measured compensated secular frequencies."""
    return HarmonicTrap(177e3, 141e3, 414e3)


@pytest.fixture(scope="session")
def circular_layout():
    return trap_model.circular_ring_layout(1e-3, 2e-3)


@pytest.fixture(scope="session")
def elliptical_layout():
    return trap_model.elliptical_trap_layout()


@pytest.fixture(scope="session")
def acceptance_log():
    """``record(number, ok, detail)`` stores one summary line per criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
