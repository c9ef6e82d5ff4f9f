import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lswg.mesh import generate

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# acceptance lines collected during the run and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def meshes():
    """Small meshes of every family, built once."""
    return {(kind, n): generate(kind, n) for kind in ("tri_uniform", "tri_figure", "pentagon") for n in (1, 2, 4)}
