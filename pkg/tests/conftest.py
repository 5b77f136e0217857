import pytest

_LINES = {}


class AcceptanceLog:
    """Collects one verdict line per acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title

    def verdict(self, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.number}: {self.title} | {detail}"
        _LINES[self.number] = line
        print(line)
        return ok

    def info(self, detail):
        print(f"       criterion {self.number} info: {detail}")
        _LINES[self.number] = _LINES.get(self.number, "") + f"\n       info: {detail}"


@pytest.fixture
def acceptance():
    return AcceptanceLog


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_LINES):
            terminalreporter.write_line(_LINES[k])
