import numpy as np
import pytest

from indirect_shm.dataset import BridgeParams, VehicleParams, build_collection


@pytest.fixture(scope="session")
def small_collection():
    """Three mass levels, four runs each, 256 samples per run."""
    return build_collection(BridgeParams(), VehicleParams(), [0.0, 90.0, 190.0], 4, master_seed=3,
                            n_samples=256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
