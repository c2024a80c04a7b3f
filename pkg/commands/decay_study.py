# commands/decay_study.py
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Dict, List, Tuple

import numpy as np
from scipy import stats

from commands.base import Command, CommandOutcome, prepare
from commands.run import fit_decay
from diagnostics import DiagnosticsRecord, saturation_time
from experiment_config import ExperimentConfig
from reports import Check, validate_records
from time_integrator import initial_state, run_simulation
from torus_spectral import fft_workers

log = logging.getLogger(__name__)

ALPHA_U_RANGE = (0.35, 0.65)
ALPHA_PSI_RANGE = (0.75, 1.25)
SATURATION_SLOPE = 2.0
SATURATION_SLOPE_TOL = 0.3


def run_seed(config: ExperimentConfig, seed: int) -> Tuple[int, List[DiagnosticsRecord]]:
    """One trajectory; module-level so worker processes can unpickle it."""
    setup, params, grid = prepare(config)
    i = config.initial
    state = initial_state(grid, setup.ops, i.epsilon, i.xi_cutoff, seed, config.diagnostics.s)
    traj = run_simulation(state, setup.ops, params, config.scheme(), config.diagnostics)
    log.info("[study] seed %d done (%d records)", seed, len(traj.records))
    return seed, traj.records


def _aggregate(values: List[float]) -> Dict[str, float]:
    if not values:
        return {"mean": None, "std": None, "n": 0}
    arr = np.asarray(values)
    return {
        "mean": float(np.mean(arr)),
        "std": float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0,
        "n": int(arr.size),
    }


class DecayStudy(Command):
    name = "decay-study"
    help = "seed ensemble with fitted decay exponents"

    def run(self, config: ExperimentConfig) -> CommandOutcome:
        setup, params, grid = prepare(config)
        seeds = [config.initial.seed + n for n in range(config.study.seeds)]
        workers = min(fft_workers(), len(seeds))

        if workers > 1:
            log.info("[study] %d seeds on %d workers", len(seeds), workers)
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_seed, [config] * len(seeds), seeds))
        else:
            results = [run_seed(config, seed) for seed in seeds]

        d = config.diagnostics
        a = d.coupling_weight(setup.ops, params)
        eta = d.splitting_shift(setup.ops, params, a)
        t_sat = saturation_time(grid.L_box, a, params.Ccoef, eta, d.s_exp)

        outcome = CommandOutcome(records=results[0][1])
        per_seed = {}
        alphas: Dict[str, List[float]] = {"u_h1": [], "psi_1L2": []}
        for seed, records in results:
            outcome.runs[seed] = records
            fits = fit_decay(records, t_sat)
            per_seed[str(seed)] = fits
            for quantity, fit in fits.items():
                if "alpha" in fit:
                    alphas[quantity].append(fit["alpha"])
            for check in validate_records(records):
                outcome.checks.append(replace(check, name=f"{check.name}_seed={seed}"))

        agg_u = _aggregate(alphas["u_h1"])
        agg_psi = _aggregate(alphas["psi_1L2"])
        outcome.fits = {"per_seed": per_seed, "alpha_u": agg_u, "alpha_psi": agg_psi}

        for label, agg, (lo, hi) in (
            ("alpha_u_range", agg_u, ALPHA_U_RANGE),
            ("alpha_psi_range", agg_psi, ALPHA_PSI_RANGE),
        ):
            mean = agg["mean"]
            outcome.checks.append(Check(
                label, mean is not None and lo <= mean <= hi,
                f"mean {mean} over {agg['n']} seeds, expected [{lo}, {hi}]",
                required=False,
            ))

        boxes = np.asarray(config.study.L_boxes, dtype=float)
        t_sats = np.array([saturation_time(L, a, params.Ccoef, eta, d.s_exp) for L in boxes])
        slope = math.nan
        if boxes.size >= 2 and np.all(t_sats > 0.0):
            slope = float(stats.linregress(np.log(boxes), np.log(t_sats)).slope)
        outcome.checks.append(Check(
            "saturation_time_scaling",
            abs(slope - SATURATION_SLOPE) <= SATURATION_SLOPE_TOL,
            f"d log t_sat / d log L_box = {slope:.4g}",
        ))
        outcome.extra = {"a": a, "t_sat": t_sat, "saturation_slope": slope, "seeds": seeds}
        outcome.tables["decay_fits.csv"] = (
            ("seed", "quantity", "alpha", "stderr", "t0", "t1", "algebraic"),
            [
                (int(seed), q, fit["alpha"], fit["stderr"], fit["window"][0], fit["window"][1], fit["algebraic"])
                for seed, fits in per_seed.items()
                for q, fit in fits.items()
                if "alpha" in fit
            ],
        )
        outcome.tables["saturation.csv"] = (
            ("L_box", "t_sat"),
            [(float(L), float(t)) for L, t in zip(boxes, t_sats)],
        )
        return outcome


def setup(registry) -> None:
    registry.add_command(DecayStudy(registry))
