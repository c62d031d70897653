import pytest

_criterion_lines = []


@pytest.fixture
def criterion():
    """Collector for one-line acceptance verdicts, echoed in the summary."""

    def record(line):
        _criterion_lines.append(line)
        print(line, flush=True)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
