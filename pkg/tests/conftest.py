import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config._criteria_lines = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion and assert it."""

    def record(label: str, ok: bool, detail: str = ""):
        line = f"{label} {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        print(line)
        request.config._criteria_lines.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
