"""tests for torus_spectral.py"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from errors import DomainError
from torus_spectral import (
    TorusGrid,
    VectorField,
    advect,
    grid_for,
    laplacian,
    leray_project,
    random_scalar_fields,
    random_solenoidal,
    shell_spectrum,
    sobolev_weight,
    spectral_derivative,
    transverse_unit,
)

TWO_PI = 2.0 * math.pi


def gradient_field(grid, stream):
    """grad of a physical scalar, as a VectorField."""
    sh = grid.forward(stream)
    return VectorField(grid, grid.dealias(np.stack([grid.ik[0] * sh, grid.ik[1] * sh])))


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("M", [3, 2, 7])
def test_grid_rejects_bad_size(M):
    with pytest.raises(DomainError):
        TorusGrid(TWO_PI, M)


def test_grid_rejects_nonpositive_box():
    with pytest.raises(DomainError):
        TorusGrid(0.0, 16)


def test_grid_layout(grid16):
    assert grid16.n.shape == (2, 16, 9)
    assert grid16.dk == pytest.approx(1.0)
    assert grid16.k2[0, 0] == 0.0
    # |n| <= 5 in each direction: 11 rows, 6 columns
    assert np.count_nonzero(grid16.mask) == 11 * 6


def test_grid_for_is_cached():
    assert grid_for(TWO_PI, 16) is grid_for(TWO_PI, 16)


def test_sobolev_weight(grid16):
    w = sobolev_weight(grid16, 2)
    np.testing.assert_allclose(w, 1.0 + grid16.k2 + grid16.k2**2)
    with pytest.raises(DomainError):
        sobolev_weight(grid16, -1)


def test_transverse_unit(grid16):
    e = transverse_unit(grid16)
    assert np.all(e[:, 0, 0] == 0.0)
    nonzero = grid16.k2 > 0
    np.testing.assert_allclose((e[0] ** 2 + e[1] ** 2)[nonzero], 1.0)
    np.testing.assert_allclose(e[0] * grid16.k[0] + e[1] * grid16.k[1], 0.0, atol=1e-14)


# ---------------------------------------------------------------------------
# pairings
# ---------------------------------------------------------------------------


def test_parseval(grid16, rng):
    f = random_scalar_fields(grid16, rng, 1)[0]
    fh = grid16.forward(f)
    physical = float(np.sum(f * f)) * grid16.dx**2
    assert grid16.inner(fh, fh) == pytest.approx(physical, rel=1e-12)


def test_single_mode_norm(grid16):
    x1, x2 = grid16.coordinates()
    f = 3.0 * np.cos(2 * x1 + x2)
    # ||f||^2 = 9 * L^2 / 2
    assert grid16.norm(grid16.forward(f)) ** 2 == pytest.approx(9.0 * TWO_PI**2 / 2.0, rel=1e-12)


# ---------------------------------------------------------------------------
# Leray projection
# ---------------------------------------------------------------------------


def test_leray_removes_gradients(grid16, rng):
    stream = random_scalar_fields(grid16, rng, 1)[0]
    projected = leray_project(gradient_field(grid16, stream))
    assert np.max(np.abs(projected.hat)) <= 1e-10 * np.max(np.abs(gradient_field(grid16, stream).hat))


def test_leray_keeps_solenoidal_fields(grid16, rng):
    u = random_solenoidal(grid16, rng)
    np.testing.assert_allclose(leray_project(u).hat, u.hat, atol=1e-12)
    assert u.max_divergence() <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_leray_idempotent_and_self_adjoint(seed):
    grid = grid_for(TWO_PI, 16)
    rng = np.random.default_rng(seed)
    f = VectorField.from_physical(grid, random_scalar_fields(grid, rng, 2))
    g = VectorField.from_physical(grid, random_scalar_fields(grid, rng, 2))
    Pf = leray_project(f)
    np.testing.assert_allclose(leray_project(Pf).hat, Pf.hat, atol=1e-10)
    lhs = grid.inner(Pf.hat, g.hat)
    rhs = grid.inner(f.hat, leray_project(g).hat)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)
    assert Pf.max_divergence() <= 1e-10


# ---------------------------------------------------------------------------
# derivatives and advection
# ---------------------------------------------------------------------------


def test_derivative_of_sine(grid16):
    x1, x2 = grid16.coordinates()
    fh = grid16.forward(np.sin(3 * x1) * np.cos(x2))
    d1 = grid16.inverse(spectral_derivative(fh, grid16, 0))
    d22 = grid16.inverse(spectral_derivative(fh, grid16, 1, order=2))
    np.testing.assert_allclose(d1, 3 * np.cos(3 * x1) * np.cos(x2), atol=1e-12)
    np.testing.assert_allclose(d22, -np.sin(3 * x1) * np.cos(x2), atol=1e-12)


def test_derivative_rejects_bad_arguments(grid16):
    fh = np.zeros((16, 9), dtype=complex)
    with pytest.raises(DomainError):
        spectral_derivative(fh, grid16, 2)
    with pytest.raises(DomainError):
        spectral_derivative(fh, grid16, 0, order=3)


def test_mixed_derivatives_commute(grid16, rng):
    fh = grid16.forward(random_scalar_fields(grid16, rng, 1)[0])
    d12 = spectral_derivative(spectral_derivative(fh, grid16, 0), grid16, 1)
    d21 = spectral_derivative(spectral_derivative(fh, grid16, 1), grid16, 0)
    np.testing.assert_allclose(d12, d21, atol=1e-12)


def test_laplacian_of_constant(grid16):
    fh = grid16.forward(np.full((16, 16), 2.5))
    assert np.max(np.abs(laplacian(fh, grid16))) <= 1e-9


def test_advect_matches_product(grid16):
    x1, x2 = grid16.coordinates()
    u = VectorField.from_physical(grid16, np.stack([np.sin(x2), np.sin(x1)]))
    fh = grid16.forward(np.cos(x1))
    expected = -np.sin(x2) * np.sin(x1)
    np.testing.assert_allclose(grid16.inverse(advect(u, fh)), expected, atol=1e-12)


def test_advect_is_skew(grid16, rng):
    # <u . grad f, f> = 0 for divergence-free u
    u = random_solenoidal(grid16, rng, xi_cutoff=2.5)
    fh = grid16.forward(random_scalar_fields(grid16, rng, 1, xi_cutoff=2.5)[0])
    scale = grid16.norm(fh) ** 2 * np.max(np.abs(u.physical))
    assert abs(grid16.inner(advect(u, fh), fh)) <= 1e-12 * scale


def test_advect_handles_stacks(grid16, rng):
    u = random_solenoidal(grid16, rng, xi_cutoff=2.5)
    stack = grid16.forward(random_scalar_fields(grid16, rng, 3, xi_cutoff=2.5))
    out = advect(u, stack)
    assert out.shape == stack.shape
    np.testing.assert_allclose(out[1], advect(u, stack[1]), atol=1e-12)


# ---------------------------------------------------------------------------
# random data and spectra
# ---------------------------------------------------------------------------


def test_random_fields_are_band_limited(grid16, rng):
    fh = grid16.forward(random_scalar_fields(grid16, rng, 2, xi_cutoff=2.0))
    outside = grid16.k2 > 4.0
    assert np.max(np.abs(fh[:, outside])) <= 1e-12
    assert np.max(np.abs(fh[:, 0, 0])) <= 1e-12


def test_random_fields_need_modes(grid16, rng):
    with pytest.raises(DomainError):
        random_scalar_fields(grid16, rng, 1, xi_cutoff=0.5)


def test_shell_spectrum_averages_to_energy(grid16, rng):
    u = random_solenoidal(grid16, rng)
    spec = shell_spectrum(u.hat, grid16)
    assert spec.xi[1] == pytest.approx(grid16.dk)
    assert np.sum(spec.energy * spec.modes) == pytest.approx(grid16.inner(u.hat, u.hat), rel=1e-12)
    assert np.all(spec.energy >= 0.0)
    # every masked lattice point lands in exactly one shell
    assert spec.modes.sum() == 11 * 11
    assert spec.modes[0] == 1


def test_shell_spectrum_single_mode(grid16):
    x1, _ = grid16.coordinates()
    fh = grid16.forward(np.cos(3 * x1))
    spec = shell_spectrum(fh, grid16)
    assert np.argmax(spec.energy) == 3
    # rint |n| = 3 holds (+-2, +-2), (+-3, 0), (0, +-3), (+-3, +-1), (+-1, +-3)
    assert spec.modes[3] == 16
    assert spec.energy[3] == pytest.approx(TWO_PI**2 / 2.0 / 16, rel=1e-12)


def test_shell_spectrum_of_flat_field_is_flat(grid16):
    fh = grid16.dealias(np.ones((grid16.M, grid16.Mh), dtype=complex))
    spec = shell_spectrum(fh, grid16)
    filled = spec.modes > 0
    np.testing.assert_allclose(spec.energy[filled], grid16.volume_factor)
