import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from motrpg import bench

settings.register_profile(
    "repo", derandomize=True, deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def example1():
    return bench.instantiate("Example1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_results = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_results", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
