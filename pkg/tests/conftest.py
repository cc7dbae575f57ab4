import numpy as np
import pytest

from wienershift.grid import TimeGrid, WienerPath, sample_paths


@pytest.fixture(scope="session")
def grid64():
    return TimeGrid(64)


@pytest.fixture(scope="session")
def batch64(grid64):
    return sample_paths(grid64, 200, seed=11)


@pytest.fixture
def path_with_end():
    """A 4-step path ending at w(1) = 0.3."""
    def make(n=4, end=0.3, seed=0):
        rng = np.random.default_rng(seed)
        inc = rng.standard_normal(n)
        inc += (end - inc.sum()) / n
        return WienerPath.from_increments(TimeGrid(n), inc)
    return make
