# tests/conftest.py
"""Fixtures partagées"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from data.instances import bump_instance, torus_density  # noqa: E402
from models.grid import TORUS, Grid, GridDensity  # noqa: E402
from models.manifold import build_torus_atlas  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def bump_pair():
    return bump_instance(res=65)


@pytest.fixture(scope='session')
def small_bump_pair():
    return bump_instance(res=33)


@pytest.fixture(scope='session')
def torus_grid():
    return Grid(dim=2, res=64, topology=TORUS)


@pytest.fixture(scope='session')
def atlas64():
    return build_torus_atlas(2, res=64)


@pytest.fixture(scope='session')
def torus_pair():
    sigma = torus_density(64, 0.1)
    return sigma, GridDensity(sigma.grid, np.ones(sigma.grid.shape))
