import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    n, title = marker.args
    entry = _criteria.setdefault(n, {"title": title, "passed": True, "details": []})
    entry["passed"] &= call.excinfo is None
    for name, value in item.user_properties:
        if name == "detail":
            entry["details"].append(str(value))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["passed"] else "FAIL"
        detail = f" [{'; '.join(e['details'])}]" if e["details"] else ""
        terminalreporter.write_line(f"criterion {n:2d} {status}: {e['title']}{detail}")


@pytest.fixture
def detail(record_property):
    """Attach a measured value to the acceptance summary line."""
    return lambda text: record_property("detail", text)
