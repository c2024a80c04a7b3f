# commands/verify_constants.py
from __future__ import annotations

import logging

from ball_basis import (
    build_quadrature,
    closed_form_constants,
    compute_model_constants,
    default_resolution,
    spectral_gap,
)
from commands.base import Command, CommandOutcome
from experiment_config import ExperimentConfig
from operator_cache import get_setup
from reports import Check

log = logging.getLogger(__name__)

# exponents the constants identity is checked on, besides the configured one
CHECKED_K = (1.5, 2.0, 3.0, 5.0)

RATIO_TOL = 1e-10
CLOSED_FORM_TOL = 1e-10
# relative change of lambda_min allowed when P grows by 2
GAP_STABILITY = 0.05


def gap_change(coarse: float, refined: float) -> float:
    return abs(coarse - refined) / coarse


class VerifyConstants(Command):
    """c1 = 3 c2, closed-form values and the spectral gap per k."""

    name = "verify-constants"
    help = "model constants and spectral gap report"

    def run(self, config: ExperimentConfig) -> CommandOutcome:
        P = config.discretization.P
        outcome = CommandOutcome()
        table = {}

        for k in sorted(set(CHECKED_K) | {float(config.model.k)}):
            quad = build_quadrature(k, *default_resolution(P), float(k))
            consts = compute_model_constants(k, quad)
            closed = closed_form_constants(k)
            gap = spectral_gap(get_setup(k, P).ops)
            refined = spectral_gap(get_setup(k, P + 2).ops)
            ratio = consts.c1 / consts.c2

            table[repr(k)] = {
                "c1": consts.c1,
                "c2": consts.c2,
                "Ccoef": consts.Ccoef,
                "ratio": ratio,
                "lambda_min": gap.lambda_min,
                "lambda_min_refined": refined.lambda_min,
                "rayleigh_r1": gap.rayleigh_r1,
            }
            outcome.checks.append(
                Check(f"c1_over_c2_k={k!r}", abs(ratio - 3.0) <= RATIO_TOL, f"c1/c2 = {ratio!r}")
            )
            outcome.checks.append(Check(
                f"closed_form_k={k!r}",
                abs(consts.c2 - closed["c2"]) <= CLOSED_FORM_TOL
                and abs(consts.Ccoef - closed["Ccoef"]) <= CLOSED_FORM_TOL,
                f"c2 = {consts.c2!r} (expected {closed['c2']!r}), "
                f"C = {consts.Ccoef!r} (expected {closed['Ccoef']!r})",
            ))
            outcome.checks.append(Check(
                f"spectral_gap_k={k!r}",
                0.0 < gap.lambda_min <= gap.rayleigh_r1 * (1.0 + 1e-10),
                f"lambda_min = {gap.lambda_min:.6g}, Rayleigh(R1) = {gap.rayleigh_r1:.6g}",
            ))
            # min-max: enlarging the basis can only lower the gap
            change = gap_change(gap.lambda_min, refined.lambda_min)
            outcome.checks.append(Check(
                f"gap_refinement_k={k!r}",
                refined.lambda_min <= gap.lambda_min * (1.0 + 1e-10) and change <= GAP_STABILITY,
                f"P={P}: {gap.lambda_min:.6g}, P={P + 2}: {refined.lambda_min:.6g} (change {change:.2%})",
            ))
            log.info(
                "[assembly] k=%s c1=%.12g c2=%.12g C=%.12g lambda_min=%.6g",
                k, consts.c1, consts.c2, consts.Ccoef, gap.lambda_min,
            )

        outcome.extra["constants"] = table
        outcome.tables["constants.csv"] = (
            ("k", "c1", "c2", "Ccoef", "ratio", "lambda_min", "lambda_min_refined", "rayleigh_r1"),
            [(float(k),) + tuple(row.values()) for k, row in table.items()],
        )
        return outcome


def setup(registry) -> None:
    registry.add_command(VerifyConstants(registry))
