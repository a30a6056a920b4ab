import numpy as np
import pytest

from sim2art.scenegen import generate_sequence


@pytest.fixture(scope="session")
def laptop_scene():
    """Small noiseless laptop sequence shared across tests."""
    return generate_sequence("laptop", seed=11, T=6, n_points=256, noisy=False)


@pytest.fixture(scope="session")
def cabinet_scene():
    return generate_sequence("cabinet_doors", seed=21, T=6, n_points=384, noisy=False)


@pytest.fixture(scope="session")
def drawer_scene():
    return generate_sequence("drawer_unit", seed=31, T=6, n_points=256, noisy=False)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
