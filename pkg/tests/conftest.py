import numpy as np
import pytest

from sim2real_radar.radar import RadarConfig, derive_params


@pytest.fixture(scope="session")
def config():
    return RadarConfig()


@pytest.fixture(scope="session")
def derived(config):
    return derive_params(config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def record(request):
    """Store one verdict line per acceptance criterion for the terminal summary."""

    def _record(number: int, passed: bool, detail: str) -> bool:
        request.config.acceptance_lines[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
