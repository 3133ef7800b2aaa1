import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one ``PASS``/``FAIL``/``SKIP`` line for the end-of-run summary."""

    def _report(criterion, ok, detail):
        status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        line = f"{status} criterion {criterion}: {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
