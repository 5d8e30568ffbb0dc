import pytest

from _shared import dipole_ensemble as _dipole_ensemble

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def dipole_ensemble():
    return _dipole_ensemble()


@pytest.fixture
def record():
    """Store the outcome of an acceptance criterion for the summary."""
    def _record(number, passed, detail):
        ACCEPTANCE[number] = (passed, detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
