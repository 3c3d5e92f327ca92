import pytest

_ACCEPT_LINES = {}


@pytest.fixture
def accept():
    """Collect one verdict line per acceptance criterion for the summary."""

    def record(number, ok, details):
        _ACCEPT_LINES[int(number)] = (bool(ok), str(details))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPT_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPT_LINES):
        ok, details = _ACCEPT_LINES[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"ACCEPT {number}: {verdict} - {details}")
