import numpy as np
import pytest

from diraclab.grid import SPECTRAL, Grid, SpinorField


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid8():
    return Grid(8)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


def random_spectral(grid, rng, drop_zero_mode=False):
    shape = (4,) + grid.shape
    data = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    if drop_zero_mode:
        data[:, 0, 0, 0] = 0
    return SpinorField(grid, data, SPECTRAL)


def complex_vectors(rng, count, dim=4):
    return rng.normal(size=(dim, count)) + 1j * rng.normal(size=(dim, count))
