# commands/verify_identities.py
from __future__ import annotations

import logging

import numpy as np

from ball_basis import inequality_bounds, inequality_ratios, spectral_gap
from commands.base import Command, CommandOutcome, prepare
from experiment_config import ExperimentConfig
from micromacro_core import (
    MicroMacroState,
    closure_laplacian,
    energy_exchange,
    galerkin_closure,
    reconstruct_du,
    rhs_distribution,
)
from operator_cache import get_setup
from reports import Check
from torus_spectral import VectorField, random_scalar_fields, random_solenoidal

log = logging.getLogger(__name__)

N_FIELDS = 20
N_DRAWS = 100
CLOSURE_TOL = 1e-8
CANCELLATION_TOL = 1e-10
MOMENT_TOL = 1e-8
GRAM_TOL = 1e-12
# the stress-Hardy bound is evaluated on a different quadrature than the ratio
TAU_SLACK = 1.05


def _relative(a: np.ndarray, b: np.ndarray, grid) -> float:
    return grid.norm(a - b) / max(grid.norm(b), np.finfo(float).tiny)


class VerifyIdentities(Command):
    name = "verify-identities"
    help = "closure, cancellation, moment identity and inequality checks on random data"

    def run(self, config: ExperimentConfig) -> CommandOutcome:
        setup, params, grid = prepare(config)
        ops = setup.ops
        rng = np.random.default_rng(config.initial.seed)
        outcome = CommandOutcome()
        checks = outcome.checks

        # drag -> stress -> P div against -c2 |xi|^2 u
        closure_err = 0.0
        galerkin_err = {}
        for n in range(N_FIELDS):
            u = random_solenoidal(grid, rng)
            target = -params.c2 * grid.k2 * u.hat
            closure_err = max(closure_err, _relative(closure_laplacian(u, ops).hat, target, grid))
            if n == 0:
                for P in sorted({2, 4, config.discretization.P}):
                    approx = galerkin_closure(u, get_setup(params.k, P).ops)
                    galerkin_err[P] = _relative(approx.hat, target, grid)
        checks.append(Check("closure_c2_laplacian", closure_err <= CLOSURE_TOL,
                            f"max relative error {closure_err:.3e}"))
        outcome.extra["galerkin_closure_error"] = {str(P): e for P, e in galerkin_err.items()}

        # <drag source, psi> + <div tau, u> = 0
        worst = 0.0
        for _ in range(N_FIELDS):
            state = self._random_state(grid, ops.Q, rng)
            drag, stress = energy_exchange(state, ops)
            worst = max(worst, abs(drag + stress) / max(abs(drag) + abs(stress), np.finfo(float).tiny))
        checks.append(Check("energy_cancellation", worst <= CANCELLATION_TOL,
                            f"max relative defect {worst:.3e}"))

        # C D(u) recovered from the exact tendency
        moment = 0.0
        for _ in range(5):
            state = self._random_state(grid, ops.Q, rng)
            tendency = rhs_distribution(state, ops, params, config.terms)
            rec = reconstruct_du(state, tendency, ops, params, config.terms)
            moment = max(moment, rec.residual / max(1.0, float(np.max(np.abs(rec.exact)))))
        checks.append(Check("moment_identity", moment <= MOMENT_TOL, f"max residual {moment:.3e}"))

        checks.extend(self._structure_checks(ops, params.k))
        checks.extend(self._inequality_checks(ops, rng))
        outcome.extra["closure_error"] = closure_err
        outcome.extra["cancellation_defect"] = worst
        outcome.extra["moment_residual"] = moment
        return outcome

    @staticmethod
    def _random_state(grid, Q: int, rng: np.random.Generator) -> MicroMacroState:
        u = random_solenoidal(grid, rng)
        psi = np.zeros((Q, grid.M, grid.M))
        psi[1:] = random_scalar_fields(grid, rng, Q - 1)
        return MicroMacroState(VectorField(grid, u.hat, solenoidal=True), psi)

    @staticmethod
    def _structure_checks(ops, k: float):
        S = ops.stiffness
        eig = np.linalg.eigvalsh(S)
        kernel = int(np.sum(np.abs(eig) <= 1e-10 * np.max(np.abs(eig))))
        gap = spectral_gap(ops)
        return [
            Check("gram_identity", ops.basis.gram_deviation <= GRAM_TOL,
                  f"deviation {ops.basis.gram_deviation:.3e}"),
            Check("stiffness_symmetric_psd", bool(np.all(S == S.T)) and eig[0] >= -1e-12,
                  f"smallest eigenvalue {eig[0]:.3e}"),
            Check("stiffness_kernel_dim_1", kernel == 1, f"kernel dimension {kernel}"),
            Check("spectral_gap_in_range",
                  0.0 < gap.lambda_min <= 2.0 * (k + 2.0) * (1.0 + 1e-10),
                  f"lambda_min = {gap.lambda_min:.6g}"),
        ]

    @staticmethod
    def _inequality_checks(ops, rng: np.random.Generator):
        bounds = inequality_bounds(ops)
        worst = np.zeros(3)
        for _ in range(N_DRAWS):
            c = np.zeros(ops.Q)
            c[1:] = rng.standard_normal(ops.Q - 1)
            worst = np.maximum(worst, inequality_ratios(c, ops))
        limits = np.array(bounds) * np.array([1.0 + 1e-9, 1.0 + 1e-9, TAU_SLACK])
        names = ("poincare", "hardy", "tau_hardy")
        return [
            Check(f"{name}_ratio_bounded",
                  bool(np.isfinite(w) and w <= lim),
                  f"max ratio {w:.6g}, bound {b:.6g}")
            for name, w, lim, b in zip(names, worst, limits, bounds)
        ]


def setup(registry) -> None:
    registry.add_command(VerifyIdentities(registry))
