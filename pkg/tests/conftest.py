import numpy as np
import pytest

from corridorlab import world


@pytest.fixture
def empty_scene():
    def make(seed=0, time_limit=world.TIME_LIMIT):
        return world.Scene(seed=seed, difficulty="easy", obstacles=[], pedestrians=[], time_limit=time_limit)

    return make


@pytest.fixture(scope="session")
def rng0():
    return np.random.default_rng(0)
