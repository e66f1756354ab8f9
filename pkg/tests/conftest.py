import numpy as np
import pytest
from hypothesis import settings

from hypsigma.dual_action import ModelParams, pinned
from hypsigma.lattice import build_lattice

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def lat23():
    return build_lattice(2, 3)


@pytest.fixture(scope="session")
def lat24():
    return build_lattice(2, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def params1():
    return ModelParams(N=2, lam=1.0)


def random_theta(rng, V, scale=1.0, x0=0):
    return pinned(rng.uniform(-scale, scale, V), x0)


def random_spd(rng, n, shift=0.5):
    X = rng.standard_normal((n, n))
    return X @ X.T / n + shift * np.eye(n)
