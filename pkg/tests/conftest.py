import pytest

_LINES = []


@pytest.fixture
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def log(number, name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}): {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
