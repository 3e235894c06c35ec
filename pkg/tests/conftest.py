from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

# criterion number -> (description, list of outcomes)
_ACCEPTANCE: dict[int, tuple[str, list[bool]]] = {}


@pytest.fixture
def data_dir():
    return DATA


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, text): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.skipped:
        return
    if report.when == "call" or report.failed:
        n, text = marker.args
        _ACCEPTANCE.setdefault(n, (text, []))[1].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        text, outcomes = _ACCEPTANCE[n]
        verdict = "PASS" if all(outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {text}")
