import numpy as np
import pytest
from jax import config as _jax_config

_jax_config.update("jax_enable_x64", True)

from sphgp.harmonics import build_harmonic_basis
from sphgp.special_math import SphereGeometry


@pytest.fixture(scope="session")
def geometry3():
    """S^2 geometry (2-D inputs after bias augmentation)."""
    return SphereGeometry.for_dimension(3)


@pytest.fixture(scope="session")
def basis3(geometry3):
    return build_harmonic_basis(geometry3, 10, seed=2)


@pytest.fixture
def rng():
    return np.random.default_rng(3)
