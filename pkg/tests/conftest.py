import numpy as np
import pytest

from deformlab import sim_core
from deformlab.scene import default_calibration


@pytest.fixture(scope="session")
def cfg():
    return sim_core.SimConfig()


@pytest.fixture(scope="session")
def calib():
    return default_calibration()


@pytest.fixture()
def rope_state():
    return sim_core.make_rope_state()


@pytest.fixture()
def cloth_state():
    return sim_core.make_cloth_state()


def raised_rope(height=0.2, seed=0, speed=0.5):
    """Rope lifted above the table with seeded random velocity; a generic
    energetic scenario for settle tests."""
    state = sim_core.make_rope_state()
    rng = np.random.default_rng(seed)
    pos = state.positions.copy()
    pos[:, 2] += height
    vel = rng.normal(0.0, speed, pos.shape)
    return sim_core.ObjectState(pos, vel, state.topology)
