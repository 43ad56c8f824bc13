"""Test wiring: acceptance summary lines plus a live service fixture."""

from __future__ import annotations

import socket
import subprocess
import sys
import time
import urllib.request

import pytest

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


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="session")
def service_url():
    """A real service process on a free local port."""
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "provekit", "serve", "--port", str(port)],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    base = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 30
    try:
        while True:
            if proc.poll() is not None:
                out = proc.stdout.read().decode(errors="replace")
                raise RuntimeError(f"service exited during startup:\n{out}")
            try:
                with urllib.request.urlopen(f"{base}/healthz", timeout=1) as resp:
                    if resp.status == 200:
                        break
            except OSError:
                pass
            if time.monotonic() > deadline:
                raise RuntimeError("service did not become healthy within 30 s")
            time.sleep(0.1)
        yield base
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait(timeout=10)
