import numpy as np
import pytest

from contiflow import harness as H
from contiflow.config_space import Torus
from contiflow.potentials import GaussianKernel, SquareWell


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def torus20():
    return Torus(1, 20.0)


@pytest.fixture(scope="session")
def test_well():
    return SquareWell(1.0, 0.5)


@pytest.fixture(scope="session")
def gauss():
    return GaussianKernel(1.0)


@pytest.fixture(scope="session")
def small_bank(torus20, test_well):
    """2000 Gibbs samples of the test potential at z = 0.2 on L = 20."""
    return H.gibbs_bank(test_well, 0.2, torus20, 2000, seed=7, chains=4)
