# commands/stability_sweep.py
from __future__ import annotations

import logging

import numpy as np

from commands.base import Command, CommandOutcome, prepare
from errors import BlowUpError, StepRejectedError
from experiment_config import ExperimentConfig
from time_integrator import initial_state, run_simulation

log = logging.getLogger(__name__)

GROWTH_LIMIT = 4.0


class StabilitySweep(Command):
    """Run each study.epsilons amplitude and report the largest one that stays small."""

    name = "stability-sweep"
    help = "empirical smallness threshold over study.epsilons"

    def run(self, config: ExperimentConfig) -> CommandOutcome:
        setup, params, grid = prepare(config)
        scheme = config.scheme()
        i = config.initial
        rows = []
        boundary = None

        for eps in sorted(config.study.epsilons):
            state = initial_state(grid, setup.ops, eps, i.xi_cutoff, i.seed, config.diagnostics.s)
            status, ratio, t_end = "ok", float("nan"), scheme.T_final
            try:
                records = run_simulation(state, setup.ops, params, scheme, config.diagnostics).records
            except BlowUpError as exc:
                status = "blowup"
                t_end = exc.last_record.t if exc.last_record is not None else 0.0
                records = []
            except StepRejectedError as exc:
                status = "cfl"
                log.warning("[study] epsilon=%g rejected: %s", eps, exc)
                records = []

            if records:
                size = np.array([r.u_hs**2 + r.psi_sL2**2 for r in records])
                ratio = float(np.max(size) / size[0]) if size[0] > 0 else 1.0
                t_end = records[-1].t
                if ratio <= GROWTH_LIMIT:
                    boundary = eps
            rows.append((float(eps), status, ratio, float(t_end)))
            log.info("[study] epsilon=%g status=%s growth=%.4g", eps, status, ratio)

        outcome = CommandOutcome()
        outcome.extra = {
            "stability_boundary": boundary,
            "sweep": [dict(zip(("epsilon", "status", "growth", "t_end"), row)) for row in rows],
        }
        outcome.tables["stability_sweep.csv"] = (("epsilon", "status", "growth", "t_end"), rows)
        return outcome


def setup(registry) -> None:
    registry.add_command(StabilitySweep(registry))
