import numpy as np
import pytest

from fetaug.grid import Volume
from fetaug.phantom import PhantomSpec, make_phantom
from fetaug.seeding import substream


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_spec(dims=64, spacing=3.0):
    return PhantomSpec(dims=(dims, dims, dims), spacing=(spacing, spacing, spacing))


@pytest.fixture(scope="session")
def phantom64():
    """One deterministic 64-cube phantom shared across tests."""
    return make_phantom(small_spec(64), substream(99, 0), scale=0.8)


@pytest.fixture(scope="session")
def phantom96():
    return make_phantom(PhantomSpec(), substream(7, 0), scale=0.9)


def random_volume(rng, dims=(16, 16, 16), lo=0.0, hi=100.0, spacing=(1.0, 1.0, 1.0)):
    return Volume(rng.uniform(lo, hi, size=dims).astype(np.float32), spacing)
