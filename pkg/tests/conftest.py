import pytest

_LINES = []


@pytest.fixture
def criterion_report():
    """Call with (label, passed, detail) to add a line to the acceptance summary."""

    def record(label, passed, detail=""):
        line = f"{label}: {'PASS' if passed else 'FAIL'}" + (f"  ({detail})" if detail else "")
        _LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
