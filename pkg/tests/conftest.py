import pytest

CRITERIA = {
    1: "size control on SG",
    2: "GMD power and opt > grid ordering",
    3: "Blobs SCF family beats ME family",
    4: "Nakagami threshold and DKW epsilon",
    5: "L1-ME null calibration",
    6: "l1 dominates l2 unnormalized test",
    7: "l1 quantile dominates l2 quantile",
    8: "oracle equivalences",
    9: "analytic gradient vs finite differences",
    10: "runtime scaling",
}

_results: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record ``(passed, detail)`` for one acceptance criterion and return ``passed``."""

    def record(number: int, passed: bool, detail: str = "") -> bool:
        _results[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        if number in _results:
            passed, detail = _results[number]
            status = "PASS" if passed else "FAIL"
        else:
            status, detail = "NOT RUN", ""
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}. {detail}".rstrip())
