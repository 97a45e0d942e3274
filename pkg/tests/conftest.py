import numpy as np
import pytest

from lidarodom.lidar_model import VLP16, project
from lidarodom.synth import load_world, simulate_scan, world_trajectory


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs taking tens of seconds")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def scene_scans():
    """Noiseless first scan of each canned scene, cached per session."""
    cache = {}

    def get(name, index=0, noise=0.0, seed=0):
        key = (name, index, noise, seed)
        if key not in cache:
            world = load_world(name)
            pose = world_trajectory(world)[index]
            truth = simulate_scan(world, pose, noise_sigma_m=noise, seed=seed)
            cache[key] = (truth, project(truth.cloud, VLP16))
        return cache[key]

    return get
