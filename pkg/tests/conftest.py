import pytest

ACCEPTANCE_LINES: list = []


@pytest.fixture
def record():
    """Store one pass/fail line for the end-of-run acceptance summary."""
    def _record(n, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2} {name}: {detail}"
        ACCEPTANCE_LINES.append((n, line))
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
