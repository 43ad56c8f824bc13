"""Shared pytest wiring.

Tests marked ``@pytest.mark.acceptance("<label>")`` get one summary
line each (PASS / FAIL / SKIP) in a dedicated terminal section, so the
criterion checklist is readable at a glance in CI logs.
"""

from __future__ import annotations

_results: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(label): criterion test reported with a summary line"
    )


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker and marker.args:
            item.user_properties.append(("acceptance_label", marker.args[0]))


def pytest_runtest_logreport(report):
    label = dict(report.user_properties).get("acceptance_label")
    if not label:
        return
    if report.when == "call":
        if report.skipped:
            _results.append((label, "SKIP"))
        else:
            _results.append((label, "PASS" if report.passed else "FAIL"))
    elif report.when == "setup" and report.skipped:
        _results.append((label, "SKIP"))
    elif report.when == "setup" and report.failed:
        _results.append((label, "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _results:
        terminalreporter.write_line(f"{outcome:<5} {label}")
