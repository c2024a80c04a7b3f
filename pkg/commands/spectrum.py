# commands/spectrum.py
from __future__ import annotations

import logging

from commands.base import Command, CommandOutcome, prepare
from commands.run import trajectory_checks
from experiment_config import ExperimentConfig
from time_integrator import initial_state, run_simulation
from torus_spectral import shell_spectrum

log = logging.getLogger(__name__)

SPECTRUM_NAME = "spectrum_long.csv"


class Spectrum(Command):
    """Shell spectra of u and psi at every record time."""

    name = "spectrum"
    help = "shell-averaged spectra of u and psi at every record"

    def run(self, config: ExperimentConfig) -> CommandOutcome:
        setup, params, grid = prepare(config)
        i = config.initial
        state = initial_state(grid, setup.ops, i.epsilon, i.xi_cutoff, i.seed, config.diagnostics.s)
        traj = run_simulation(state, setup.ops, params, config.scheme(), config.diagnostics, keep_snapshots=True)

        rows = []
        for snap in traj.snapshots:
            u_spec = shell_spectrum(snap.u.hat, grid)
            psi_spec = shell_spectrum(snap.psi_hat, grid)
            rows.extend(
                (snap.t, shell, float(u_spec.xi[shell]), int(u_spec.modes[shell]),
                 float(u_spec.energy[shell]), float(psi_spec.energy[shell]))
                for shell in range(u_spec.xi.size)
            )
        log.info("[report] %d spectrum rows over %d snapshots", len(rows), len(traj.snapshots))

        a = config.diagnostics.coupling_weight(setup.ops, params)
        outcome = CommandOutcome(records=traj.records)
        outcome.checks = trajectory_checks(traj.records, config, setup.ops, params, a)
        outcome.tables[SPECTRUM_NAME] = (("t", "shell", "xi", "modes", "E_u", "E_psi"), rows)
        return outcome


def setup(registry) -> None:
    registry.add_command(Spectrum(registry))
