import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def verdicts():
    """Collector for acceptance verdicts, printed in the terminal summary."""
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
