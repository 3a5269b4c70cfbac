import pytest

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def add(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
