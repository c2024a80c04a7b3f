import math

import numpy as np
import pytest

from operator_cache import get_params, get_setup
from micromacro_core import MicroMacroState
from torus_spectral import VectorField, grid_for, random_scalar_fields, random_solenoidal

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def setup_k2():
    return get_setup(2.0, 4)


@pytest.fixture(scope="session")
def ops_k2(setup_k2):
    return setup_k2.ops


@pytest.fixture(scope="session")
def small_ops():
    """P=2 operators: cheapest setup that still carries the quadratic moments."""
    return get_setup(2.0, 2).ops


@pytest.fixture(scope="session")
def params_k2():
    return get_params(2.0, 1.0)


@pytest.fixture(scope="session")
def grid16():
    return grid_for(TWO_PI, 16)


@pytest.fixture(scope="session")
def grid8():
    return grid_for(TWO_PI, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(grid, ops, rng, amplitude=0.1, xi_cutoff=3.0):
    """Band-limited zero-mass state with ||u|| = ||psi|| = amplitude."""
    u = random_solenoidal(grid, rng, xi_cutoff)
    u = VectorField(grid, u.hat * (amplitude / grid.norm(u.hat)), solenoidal=True)
    psi = np.zeros((ops.Q, grid.M, grid.M))
    psi[1:] = random_scalar_fields(grid, rng, ops.Q - 1, xi_cutoff)
    psi *= amplitude / grid.norm(grid.forward(psi))
    return MicroMacroState(u, psi, 0.0)


@pytest.fixture
def make_state(rng):
    def make(grid, ops, amplitude=0.1, xi_cutoff=3.0):
        return random_state(grid, ops, rng, amplitude, xi_cutoff)
    return make
