import numpy as np
import pytest

from magspec.fields import PeriodicBackground
from magspec.geometry import LatticeGeometry
from magspec.models import chain_random_model, lattice_random_model


@pytest.fixture(scope="session")
def staggered2d():
    """Period-(2,2) staggered lattice background with gap (4, 5)."""
    g = LatticeGeometry(2, (16, 16), cell=(2, 2))
    x1, x2 = np.meshgrid(np.arange(2), np.arange(2), indexing="ij")
    v = 2.0 * x1 + 3.0 * x2
    return g, PeriodicBackground(g, v)


@pytest.fixture(scope="session")
def lattice_model16():
    return lattice_random_model(L=16, va=8.0, vb=12.0, eps=3.0, u_scale=3.0)


@pytest.fixture(scope="session")
def chain48():
    return chain_random_model(L=48)
