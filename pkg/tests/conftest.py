import pytest

_LINES = []


@pytest.fixture
def criterion():
    """``check(label, ok, detail)`` records a PASS/FAIL line and asserts ``ok``."""

    def check(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
