import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from floodwatch.traffgen import TraceSpec, sized_spec, write_trace  # noqa: E402

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("FLOODWATCH_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="scale run; set FLOODWATCH_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        prev = _ACCEPTANCE.get(label)
        if prev is None or prev[0] == "PASS":
            reason = ""
            if rep.skipped and isinstance(rep.longrepr, tuple):
                reason = rep.longrepr[2]
            _ACCEPTANCE[label] = (status, reason)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0][2:])):
        status, reason = _ACCEPTANCE[label]
        line = f"{status}  {label}"
        if reason:
            line += f"  ({reason})"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def big_trace(tmp_path_factory):
    """~100 MiB UDP trace shaped after the 100 MB reference row."""
    spec = sized_spec(100, seed=2024)
    path = tmp_path_factory.mktemp("big") / "trace-100mb.log"
    summary = write_trace(spec, path)
    return spec, path, summary


@pytest.fixture
def small_trace(tmp_path):
    spec = TraceSpec(seed=11, attacker_count=20, packets_per_attacker=120,
                     legitimate_host_count=30, legitimate_max_packets=40)
    path = tmp_path / "small.log"
    write_trace(spec, path)
    return spec, path
