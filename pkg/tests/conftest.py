import pytest

_RESULTS = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line: ``verdict(number, name, ok, detail)``."""

    def record(number, name, ok, detail=""):
        line = f"criterion {number:>2} {name:<34} {'PASS' if ok else 'FAIL'}  {detail}"
        _RESULTS.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)
