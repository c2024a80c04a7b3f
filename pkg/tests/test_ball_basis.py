"""tests for ball_basis.py"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate

from ball_basis import (
    assemble_operators,
    build_basis,
    build_quadrature,
    closed_form_constants,
    compute_model_constants,
    default_resolution,
    equilibrium_weight,
    inequality_bounds,
    inequality_ratios,
    make_params,
    normalization,
    spectral_gap,
)
from errors import (
    DegenerateInputError,
    DomainError,
    IntegrabilityError,
    InvalidWeightError,
    ResolutionError,
)
from operator_cache import get_setup

K_VALUES = [1.5, 2.0, 3.0, 5.0]


def polar_integral(func):
    """Dense adaptive oracle for int_B func(R1, R2) dR."""
    val, _ = integrate.dblquad(
        lambda r, th: func(r * math.cos(th), r * math.sin(th)) * r,
        0.0, 2.0 * math.pi, 0.0, 1.0,
        epsabs=1e-12, epsrel=1e-12,
    )
    return val


# ---------------------------------------------------------------------------
# equilibrium weight and quadrature
# ---------------------------------------------------------------------------


def test_equilibrium_weight_origin_k1():
    assert equilibrium_weight(1.0, [0.0, 0.0]) == pytest.approx(2.0 / math.pi, rel=1e-12)


@pytest.mark.parametrize("k", K_VALUES)
def test_equilibrium_weight_vanishes_on_boundary(k):
    assert equilibrium_weight(k, [0.6, 0.8]) == 0.0


def test_equilibrium_weight_outside_disk():
    with pytest.raises(DomainError):
        equilibrium_weight(2.0, [1.0, 0.5])


@pytest.mark.parametrize("k", [2.0, 3.0, 5.0])
def test_equilibrium_weight_normalized(k):
    quad = build_quadrature(k, 8, 16, 0.0)
    values = equilibrium_weight(k, np.stack([quad.R1, quad.R2], axis=-1))
    assert quad.integrate(values) == pytest.approx(1.0, abs=1e-12)


def test_quadrature_moments_k2():
    quad = build_quadrature(2.0, 8, 32, 2.0)
    Z = quad.integrate(np.ones(quad.n_nodes))
    assert Z == pytest.approx(math.pi / 3.0, rel=1e-13)
    assert quad.integrate(quad.R1) / Z == pytest.approx(0.0, abs=1e-15)
    assert quad.integrate(quad.R1**2) / Z == pytest.approx(1.0 / 8.0, rel=1e-13)


@pytest.mark.parametrize("k", K_VALUES)
def test_normalization_closed_form(k):
    assert normalization(k) == pytest.approx(closed_form_constants(k)["Z"], rel=1e-13)


def test_quadrature_weights_positive():
    quad = build_quadrature(1.5, 6, 10, -0.5)
    assert np.all(quad.weights > 0)


@pytest.mark.parametrize("alpha", [-1.0, -2.5])
def test_quadrature_rejects_bad_weight(alpha):
    with pytest.raises(InvalidWeightError):
        build_quadrature(2.0, 4, 8, alpha)


def test_quadrature_arrays_read_only():
    quad = build_quadrature(2.0, 4, 8, 2.0)
    with pytest.raises(ValueError):
        quad.weights[0] = 1.0


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("P", [0, 1, 2, 5, 8])
def test_basis_size(P):
    quad = build_quadrature(2.0, *default_resolution(P), 2.0)
    basis = build_basis(2.0, P, quad)
    assert basis.Q == (P + 1) * (P + 2) // 2


def test_basis_degree_zero_is_constant():
    quad = build_quadrature(2.0, *default_resolution(0), 2.0)
    basis = build_basis(2.0, 0, quad)
    assert basis.Q == 1
    np.testing.assert_allclose(basis.values[0], 1.0, rtol=1e-13)


@pytest.mark.parametrize("k", K_VALUES)
def test_basis_orthonormal(k):
    P = 6
    quad = build_quadrature(k, *default_resolution(P), k)
    basis = build_basis(k, P, quad)
    assert basis.gram_deviation <= 1e-12


def test_basis_ordering():
    quad = build_quadrature(2.0, *default_resolution(2), 2.0)
    basis = build_basis(2.0, 2, quad)
    assert [(m.degree, m.m, m.kind) for m in basis.modes] == [
        (0, 0, "c"),
        (1, 1, "c"), (1, 1, "s"),
        (2, 0, "c"), (2, 2, "c"), (2, 2, "s"),
    ]
    assert basis.index(2, 2, "s") == 5


def test_basis_gradient_matches_finite_difference():
    quad = build_quadrature(2.0, *default_resolution(4), 2.0)
    basis = build_basis(2.0, 4, quad)
    R1, R2, h = np.array([0.3, -0.2]), np.array([0.1, 0.5]), 1e-6
    grad = basis.gradient(R1, R2)
    d1 = (basis.evaluate(R1 + h, R2) - basis.evaluate(R1 - h, R2)) / (2 * h)
    d2 = (basis.evaluate(R1, R2 + h) - basis.evaluate(R1, R2 - h)) / (2 * h)
    np.testing.assert_allclose(grad[0], d1, atol=1e-7)
    np.testing.assert_allclose(grad[1], d2, atol=1e-7)


def test_basis_rejects_coarse_quadrature():
    quad = build_quadrature(2.0, 4, 30, 2.0)
    with pytest.raises(ResolutionError):
        build_basis(2.0, 4, quad)


def test_basis_rejects_mismatched_weight():
    quad = build_quadrature(2.0, 10, 30, 1.0)
    with pytest.raises(DomainError):
        build_basis(2.0, 4, quad)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def test_stiffness_structure(ops_k2):
    S = ops_k2.stiffness
    assert np.max(np.abs(S - S.T)) <= 1e-12
    assert np.all(S[0] == 0.0) and np.all(S[:, 0] == 0.0)
    eig = np.linalg.eigvalsh(S)
    assert np.sum(np.abs(eig) <= 1e-10 * eig[-1]) == 1
    assert eig[0] >= -1e-12


def test_drag_zero_mass_row(ops_k2):
    assert np.all(ops_k2.drag[:, :, 0, :] == 0.0)


def test_drag_source_is_constant_slice(ops_k2):
    np.testing.assert_allclose(ops_k2.drag_source, ops_k2.drag[:, :, :, 0], atol=1e-13)


def test_stress_symmetric(ops_k2):
    assert np.array_equal(ops_k2.stress, ops_k2.stress.transpose(1, 0, 2))


def test_stress_is_drag_source_transpose_plus_mass(ops_k2):
    # t[l][m]_p = delta_lm delta_p0 + b[m][l]_p
    expected = ops_k2.drag_source.transpose(1, 0, 2).copy()
    expected[0, 0, 0] += 1.0
    expected[1, 1, 0] += 1.0
    np.testing.assert_allclose(ops_k2.stress, expected, atol=1e-12)


def test_drag_source_symmetric_on_zero_mass_modes(ops_k2):
    b = ops_k2.drag_source
    np.testing.assert_allclose(b, b.transpose(1, 0, 2), atol=1e-12)


def test_closure_tensor_isotropic(ops_k2, params_k2):
    K = ops_k2.closure
    c2 = params_k2.c2
    eye = np.eye(2)
    iso = c2 * (
        np.einsum("lm,ij->lmij", eye, eye)
        + np.einsum("li,mj->lmij", eye, eye)
        + np.einsum("lj,mi->lmij", eye, eye)
    )
    np.testing.assert_allclose(K, iso, atol=1e-12)


@pytest.fixture(scope="module")
def oracle_setup():
    return get_setup(2.0, 2)


def test_operator_entries_match_dense_oracle(oracle_setup):
    k, ops, basis = 2.0, oracle_setup.ops, oracle_setup.basis
    Z = math.pi / (k + 1)

    def phi(p, R1, R2):
        return float(basis.evaluate(np.array(R1), np.array(R2))[p])

    def dphi(i, p, R1, R2):
        return float(basis.gradient(np.array(R1), np.array(R2))[i, p])

    def psi_inf(R1, R2):
        return max(1.0 - R1 * R1 - R2 * R2, 0.0) ** k / Z

    S33 = polar_integral(lambda a, b: psi_inf(a, b) * (dphi(0, 3, a, b) ** 2 + dphi(1, 3, a, b) ** 2))
    assert ops.stiffness[3, 3] == pytest.approx(S33, abs=1e-8)

    D0043 = polar_integral(lambda a, b: a * psi_inf(a, b) * phi(3, a, b) * dphi(0, 4, a, b))
    assert ops.drag[0, 0, 4, 3] == pytest.approx(D0043, abs=1e-8)

    m2_013 = polar_integral(lambda a, b: a * b * psi_inf(a, b) * phi(5, a, b))
    assert ops.moments[0, 1, 5] == pytest.approx(m2_013, abs=1e-8)

    # R_1 d_1 U psi_inf = 2k R_1^2 (1-|R|^2)^(k-1) / Z
    t00_0 = polar_integral(lambda a, b: 2 * k * a * a * max(1 - a * a - b * b, 0.0) ** (k - 1) / Z)
    assert ops.stress[0, 0, 0] == pytest.approx(t00_0, abs=1e-8)
    t00_3 = polar_integral(
        lambda a, b: 2 * k * a * a * max(1 - a * a - b * b, 0.0) ** (k - 1) * phi(3, a, b) / Z
    )
    assert ops.stress[0, 0, 3] == pytest.approx(t00_3, abs=1e-8)


def test_assembly_requires_quadratic_moments():
    quad = build_quadrature(2.0, *default_resolution(1), 2.0)
    basis = build_basis(2.0, 1, quad)
    with pytest.raises(ResolutionError):
        assemble_operators(basis, quad)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def test_constants_k2():
    quad = build_quadrature(2.0, 8, 16, 2.0)
    c = compute_model_constants(2.0, quad)
    assert c.c2 == pytest.approx(2.0, abs=1e-10)
    assert c.c1 == pytest.approx(6.0, abs=1e-10)
    assert c.Ccoef == pytest.approx(0.25, abs=1e-10)


@pytest.mark.parametrize("k", K_VALUES)
def test_c1_is_three_c2(k):
    c = compute_model_constants(k, build_quadrature(k, 8, 16, k))
    assert c.c1 / c.c2 == pytest.approx(3.0, abs=1e-10)
    closed = closed_form_constants(k)
    assert c.c2 == pytest.approx(closed["c2"], rel=1e-10)
    assert c.Ccoef == pytest.approx(closed["Ccoef"], rel=1e-10)


@pytest.mark.parametrize("k", [1.0, 0.5])
def test_constants_need_k_above_one(k):
    with pytest.raises(IntegrabilityError):
        compute_model_constants(k, build_quadrature(2.0, 8, 16, 2.0))


def test_make_params():
    params = make_params(3.0, 0.5)
    assert params.Z == pytest.approx(math.pi / 4.0, rel=1e-13)
    assert params.d_config == 2
    with pytest.raises(DomainError):
        make_params(3.0, -1.0)


# ---------------------------------------------------------------------------
# spectral gap and inequalities
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", K_VALUES)
def test_spectral_gap_bounds(k):
    gap = spectral_gap(get_setup(k, 8).ops)
    assert gap.lambda_min > 0.0
    assert gap.rayleigh_r1 == pytest.approx(2.0 * (k + 2.0), rel=1e-10)
    assert gap.lambda_min <= gap.rayleigh_r1 * (1 + 1e-12)


@pytest.mark.parametrize("k", [2.0, 3.0])
def test_spectral_gap_refinement_is_monotone(k):
    coarse = spectral_gap(get_setup(k, 4).ops).lambda_min
    fine = spectral_gap(get_setup(k, 6).ops).lambda_min
    assert fine <= coarse * (1 + 1e-10)


@pytest.mark.parametrize("k", K_VALUES)
def test_spectral_gap_is_stable_under_refinement(k):
    coarse = spectral_gap(get_setup(k, 6).ops).lambda_min
    fine = spectral_gap(get_setup(k, 8).ops).lambda_min
    assert fine <= coarse * (1 + 1e-10)
    assert abs(coarse - fine) <= 0.05 * coarse


def test_poincare_ratio_at_eigenvector(ops_k2):
    c = np.zeros(ops_k2.Q)
    c[1:] = ops_k2.relax_eigvecs[:, 0]
    ratios = inequality_ratios(c, ops_k2)
    assert ratios.poincare == pytest.approx(1.0 / ops_k2.relax_eigvals[0], rel=1e-12)


def test_inequality_ratios_bounded(ops_k2, rng):
    bounds = inequality_bounds(ops_k2)
    for _ in range(100):
        c = np.zeros(ops_k2.Q)
        c[1:] = rng.standard_normal(ops_k2.Q - 1)
        r = inequality_ratios(c, ops_k2)
        assert all(np.isfinite(r))
        assert r.poincare <= bounds.poincare * (1 + 1e-9)
        assert r.hardy <= bounds.hardy * (1 + 1e-9)
        assert r.tau_hardy <= bounds.tau_hardy * 1.05


def test_hardy_ratio_for_r1(ops_k2):
    c = ops_k2.basis.project(lambda R1, R2: R1, ops_k2.quad)
    c[0] = 0.0
    r = inequality_ratios(c, ops_k2)
    assert 0.0 < r.hardy < np.inf


def test_inequality_ratios_reject_mass(ops_k2):
    c = np.ones(ops_k2.Q)
    with pytest.raises(DomainError):
        inequality_ratios(c, ops_k2)


def test_inequality_ratios_reject_zero(ops_k2):
    with pytest.raises(DegenerateInputError):
        inequality_ratios(np.zeros(ops_k2.Q), ops_k2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=14, max_size=14))
def test_poincare_bound_holds_for_arbitrary_coefficients(values):
    ops = get_setup(2.0, 4).ops
    c = np.concatenate([[0.0], values])
    assume(np.linalg.norm(c) > 1e-3)
    ratios = inequality_ratios(c, ops)
    assert ratios.poincare <= inequality_bounds(ops).poincare * (1 + 1e-9)


@pytest.mark.parametrize("p", [3, 10])
def test_radial_modes_carry_no_shear_stress(p):
    ops = get_setup(2.0, 4).ops
    assert ops.basis.modes[p].m == 0
    assert ops.stress[0, 1, p] == pytest.approx(0.0, abs=1e-13)
    assert ops.stress[0, 0, p] == pytest.approx(ops.stress[1, 1, p], abs=1e-13)
