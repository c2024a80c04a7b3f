# micromacro_core.py
#
# Coupled state (velocity on the torus, Galerkin coefficient fields for psi)
# and the right-hand sides of the perturbation system.
#
# psi(x, R) = psi_inf(R) * sum_p c_p(x) phi_p(R); state.psi holds c_p(x) on the
# physical grid, shape (Q, M, M). A_ij = d_j u_i throughout.

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ball_basis import BallOperators, FeneParams
from errors import DomainError
from torus_spectral import (
    TorusGrid,
    VectorField,
    advect,
    laplacian,
    leray_project,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingTerms:
    """Which nonlinear terms enter the tendencies."""

    advection: bool = True
    psi_drag: bool = True

    @classmethod
    def linear(cls) -> "CouplingTerms":
        return cls(advection=False, psi_drag=False)

    @property
    def nonlinear(self) -> bool:
        return self.advection or self.psi_drag


FULL_COUPLING = CouplingTerms()


@dataclass(frozen=True, eq=False)
class MicroMacroState:
    u: VectorField
    psi: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, grid: TorusGrid, Q: int, t: float = 0.0) -> "MicroMacroState":
        return cls(VectorField.zeros(grid), np.zeros((Q, grid.M, grid.M)), t)

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid

    @property
    def psi_hat(self) -> np.ndarray:
        return self.grid.forward(self.psi)

    @property
    def mass_max(self) -> float:
        return float(np.max(np.abs(self.psi[0])))

    @property
    def div_max(self) -> float:
        return self.u.max_divergence()

    def check_invariants(self, mass_tol: float = 1e-10, div_tol: float = 1e-10) -> None:
        if self.mass_max > mass_tol:
            raise DomainError(f"psi carries R-mass {self.mass_max:.3e}")
        if self.div_max > div_tol:
            raise DomainError(f"velocity divergence {self.div_max:.3e}")


@dataclass(frozen=True, eq=False)
class StressField:
    grid: TorusGrid
    physical: np.ndarray  # (2, 2, M, M), exactly symmetric

    @property
    def hat(self) -> np.ndarray:
        return self.grid.dealias(self.grid.forward(self.physical))

    def divergence_hat(self) -> np.ndarray:
        """(div tau)_l = d_m tau_lm."""
        th = self.hat
        ik = self.grid.ik
        return np.stack([ik[0] * th[l, 0] + ik[1] * th[l, 1] for l in (0, 1)])


def compute_stress_field(state: MicroMacroState, ops: BallOperators) -> StressField:
    t = ops.stress
    tau11 = np.tensordot(t[0, 0], state.psi, axes=1)
    tau12 = np.tensordot(t[0, 1], state.psi, axes=1)
    tau22 = np.tensordot(t[1, 1], state.psi, axes=1)
    physical = np.stack([np.stack([tau11, tau12]), np.stack([tau12, tau22])])
    return StressField(state.grid, physical)


def velocity_gradient_hat(u_hat: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """A_hat[i, j] = i xi_j u_hat_i."""
    return np.stack([np.stack([grid.ik[j] * u_hat[i] for j in (0, 1)]) for i in (0, 1)])


def deformation_hat(u_hat: np.ndarray, grid: TorusGrid) -> np.ndarray:
    A = velocity_gradient_hat(u_hat, grid)
    return 0.5 * (A + A.transpose(1, 0, 2, 3))


def drag_source_hat(u_hat: np.ndarray, ops: BallOperators, grid: TorusGrid) -> np.ndarray:
    """Coefficients of div_R(-A R psi_inf): sum_ij A_ij b[i][j]_p."""
    A = velocity_gradient_hat(u_hat, grid)
    return np.einsum("ijp,ijxy->pxy", ops.drag_source, A)


def psi_drag_hat(u: VectorField, psi: np.ndarray, ops: BallOperators) -> np.ndarray:
    """Dealiased coefficients of div_R(-A R psi): sum_ij A_ij (D[i][j] c)_p."""
    grid = u.grid
    A = grid.inverse(velocity_gradient_hat(u.hat, grid))
    prod = np.einsum("ijxy,ijpq,qxy->pxy", A, ops.drag, psi, optimize=True)
    return grid.dealias(grid.forward(prod))


def relaxation_hat(psi_hat: np.ndarray, ops: BallOperators) -> np.ndarray:
    return -np.tensordot(ops.stiffness, psi_hat, axes=1)


def rhs_velocity(
    state: MicroMacroState, ops: BallOperators, terms: CouplingTerms = FULL_COUPLING
) -> VectorField:
    """P(div tau - u . grad u); the result is solenoidal with zero mean."""
    grid = state.grid
    rhs = compute_stress_field(state, ops).divergence_hat()
    if terms.advection:
        rhs = rhs - advect(state.u, state.u.hat)
    out = leray_project(VectorField(grid, grid.dealias(rhs)))
    out.hat[:, 0, 0] = 0.0
    return out


def rhs_distribution_hat(
    state: MicroMacroState,
    ops: BallOperators,
    params: FeneParams,
    terms: CouplingTerms = FULL_COUPLING,
) -> np.ndarray:
    grid = state.grid
    ch = state.psi_hat
    out = params.nu * laplacian(ch, grid) + relaxation_hat(ch, ops)
    out = out + drag_source_hat(state.u.hat, ops, grid)
    if terms.advection:
        out = out - advect(state.u, ch)
    if terms.psi_drag:
        out = out + psi_drag_hat(state.u, state.psi, ops)
    return grid.dealias(out)


def rhs_distribution(
    state: MicroMacroState,
    ops: BallOperators,
    params: FeneParams,
    terms: CouplingTerms = FULL_COUPLING,
) -> np.ndarray:
    """Physical-space tendency of the coefficient fields, shape (Q, M, M)."""
    return state.grid.inverse(rhs_distribution_hat(state, ops, params, terms))


@dataclass(frozen=True, eq=False)
class DuReconstruction:
    reconstructed: np.ndarray  # (2, 2, M, M)
    exact: np.ndarray
    residual: float


def reconstruct_du(
    state: MicroMacroState,
    tendency: np.ndarray,
    ops: BallOperators,
    params: FeneParams,
    terms: CouplingTerms = FULL_COUPLING,
) -> DuReconstruction:
    """Recover C*D(u) from the psi tendency by testing against R_j R_k.

    C D(u)_jk = int R_j R_k [psi_t + u.grad psi - nu Lap psi - L psi - div_R(-A R psi)].
    """
    grid = state.grid
    ch = state.psi_hat
    balance = grid.forward(tendency) - params.nu * laplacian(ch, grid) - relaxation_hat(ch, ops)
    if terms.advection:
        balance = balance + advect(state.u, ch)
    if terms.psi_drag:
        balance = balance - psi_drag_hat(state.u, state.psi, ops)
    reconstructed = grid.inverse(np.einsum("jkp,pxy->jkxy", ops.moments, balance))
    exact = params.Ccoef * grid.inverse(deformation_hat(state.u.hat, grid))
    residual = float(np.max(np.abs(reconstructed - exact)))
    return DuReconstruction(reconstructed, exact, residual)


def closure_laplacian(u: VectorField, ops: BallOperators) -> VectorField:
    """P div(tau[psi_u]) with psi_u the exact stationary response to A.

    Equals c2 Lap u for divergence-free u.
    """
    grid = u.grid
    A = velocity_gradient_hat(u.hat, grid)
    tau = np.einsum("lmij,ijxy->lmxy", ops.closure, A)
    div = np.stack([grid.ik[0] * tau[l, 0] + grid.ik[1] * tau[l, 1] for l in (0, 1)])
    return leray_project(VectorField(grid, div))


def galerkin_closure(u: VectorField, ops: BallOperators) -> VectorField:
    """Same as closure_laplacian but with the stationary response projected on the basis.

    Converges to c2 Lap u as P grows; not exact at finite P.
    """
    grid = u.grid
    d = drag_source_hat(u.hat, ops, grid)
    tau = np.einsum("lmp,pxy->lmxy", ops.stress, d)
    div = np.stack([grid.ik[0] * tau[l, 0] + grid.ik[1] * tau[l, 1] for l in (0, 1)])
    return leray_project(VectorField(grid, div))


def energy_exchange(state: MicroMacroState, ops: BallOperators) -> Tuple[float, float]:
    """(<drag source, psi>, <div tau, u>); the two cancel."""
    grid = state.grid
    drag_work = grid.inner(drag_source_hat(state.u.hat, ops, grid), state.psi_hat)
    stress_work = grid.inner(compute_stress_field(state, ops).divergence_hat(), state.u.hat)
    return drag_work, stress_work
