import numpy as np
import pytest

from stochfire.config import SimConfig
from stochfire.ensemble import EnsembleSpec, run_ensemble


CRITERIA_LINES = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERIA_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session", autouse=True)
def _warm_jit():
    # compile (or load cached) numba kernels once so timed tests measure runtime only
    run_ensemble(EnsembleSpec(SimConfig(height=8, width=8, seed_cells=((4, 4),), density=1.0), 2, 5))


@pytest.fixture(scope="session")
def small_config():
    return SimConfig(height=24, width=24, seed_cells=((12, 12),), max_steps=40)


@pytest.fixture(scope="session")
def ens20(small_config):
    """120 realisations of a small grid at S-Level 20."""
    return run_ensemble(EnsembleSpec(small_config.replace(s_level=20.0), 120, 40))


@pytest.fixture(scope="session")
def ens0(small_config):
    return run_ensemble(EnsembleSpec(small_config, 10, 40))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
