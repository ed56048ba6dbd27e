import numpy as np
import pytest
from hypothesis import settings

from lagflow.field import differential_rotation, double_well, rigid_rotation

settings.register_profile("lagflow", max_examples=40, deadline=None)
settings.load_profile("lagflow")


def radial_level(r, amplitude=1.0):
    """Level of the differential-rotation Hamiltonian at radius ``r``."""
    return amplitude * (1.0 - r * r) ** 2 / 4.0


def rigid_level(r):
    return (1.0 - r * r) / 2.0


@pytest.fixture(scope="session")
def diff():
    return differential_rotation()


@pytest.fixture(scope="session")
def rigid():
    return rigid_rotation()


@pytest.fixture(scope="session")
def dwell():
    return double_well()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
