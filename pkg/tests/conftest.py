import pytest

# one verdict line per acceptance criterion, printed after the run
VERDICTS: dict[int, str] = {}


def record_verdict(number: int, passed: bool, detail: str) -> None:
    VERDICTS[number] = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}"


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])


@pytest.fixture
def verdict():
    return record_verdict
