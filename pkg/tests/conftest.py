import pytest


class CriteriaLog:
    """Collects one pass/fail line per acceptance criterion.

    Lines print immediately (visible with -s) and again in the terminal
    summary section, which pytest never captures.
    """

    def __init__(self):
        self.lines = []

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} {name}"
        if detail:
            line += f" ({detail})"
        self.lines.append(line)
        print(line)
        assert ok, line


_LOG = CriteriaLog()


@pytest.fixture(scope="session")
def criteria():
    return _LOG


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _LOG.lines:
        terminalreporter.section("acceptance criteria")
        for line in _LOG.lines:
            terminalreporter.line(line)
