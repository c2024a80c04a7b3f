# commands/base.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from ball_basis import FeneParams
from diagnostics import DiagnosticsRecord
from experiment_config import ExperimentConfig
from operator_cache import BallSetup, get_params, get_setup
from reports import Check, Table
from torus_spectral import TorusGrid, grid_for

log = logging.getLogger(__name__)


@dataclass
class CommandOutcome:
    records: List[DiagnosticsRecord] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)
    fits: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, Table] = field(default_factory=dict)
    # seed -> records, for commands that run several trajectories
    runs: Dict[int, List[DiagnosticsRecord]] = field(default_factory=dict)


class Command:
    """A CLI subcommand. Subclasses set `name` and implement run()."""

    name = ""
    help = ""

    def __init__(self, registry: Any):
        self.registry = registry

    def run(self, config: ExperimentConfig) -> CommandOutcome:
        raise NotImplementedError


def prepare(config: ExperimentConfig) -> Tuple[BallSetup, FeneParams, TorusGrid]:
    """Operators, parameters and grid for the configured (k, nu, P, L_box, M)."""
    d = config.discretization
    setup = get_setup(config.model.k, d.P)
    params = get_params(config.model.k, config.model.nu)
    return setup, params, grid_for(d.L_box, d.M)
