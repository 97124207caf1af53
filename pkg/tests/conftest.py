"""Collects one verdict line per acceptance criterion and prints them after the run."""

import pytest

_VERDICTS: dict[int, str] = {}


class CriterionLog:
    def record(self, number: int, passed: bool, detail: str) -> bool:
        _VERDICTS[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(_VERDICTS[number])
        return passed


@pytest.fixture(scope="session")
def criterion() -> CriterionLog:
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
