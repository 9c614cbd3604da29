import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance: dict[int, list[str]] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def video_rows() -> list[dict]:
    return [json.loads(line) for line in (FIXTURES / "videos.jsonl").read_text().splitlines()]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.setdefault(n, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        ok = all(o == "passed" for o in _acceptance[n])
        terminalreporter.write_line(f"ACCEPTANCE criterion {n}: {'PASS' if ok else 'FAIL'}")
