import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fbmhedge.fbm import FbmPath, UniformGrid, simulate_fbm, to_price_path

settings.register_profile(
    "default", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_path(values, h=0.75, horizon=1.0):
    values = np.asarray(values, dtype=np.float64)
    return FbmPath(UniformGrid(values.size - 1, horizon), h, values)


def fbm_price_paths(h, steps, seed, count, s0=1.0):
    rows = simulate_fbm(UniformGrid(steps), h, seed, range(count))
    return [to_price_path(FbmPath(UniformGrid(steps), h, r, (seed, i)), s0) for i, r in enumerate(rows)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
