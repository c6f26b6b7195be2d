from __future__ import annotations

import pytest

from chainshort.embedder import OfflineEmbedder

_CRITERIA: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None and report.when == "call":
        verdict = "PASS" if report.passed and not hasattr(report, "wasxfail") else "FAIL"
        note = f" (expected: {report.wasxfail})" if hasattr(report, "wasxfail") and report.skipped else ""
        _CRITERIA.append((marker.args[0] + note, verdict))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in _CRITERIA:
        terminalreporter.write_line(f"{verdict}  {name}")


@pytest.fixture
def embedder() -> OfflineEmbedder:
    return OfflineEmbedder()
