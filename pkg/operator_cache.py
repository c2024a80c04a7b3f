# operator_cache.py
#
# In-memory registry of assembled configuration-space operators.
# Used by the commands (fene.py dispatch) so each (k, P) pair is assembled
# once per process.

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple
import logging

from ball_basis import (
    BallBasis,
    BallOperators,
    BallQuadrature,
    FeneParams,
    assemble_operators,
    build_basis,
    build_quadrature,
    default_resolution,
    make_params,
)

log = logging.getLogger("operator_cache")


@dataclass
class BallSetup:
    """Quadrature, basis and operators for a single (k, P)."""
    k: float
    P: int
    quad: BallQuadrature
    basis: BallBasis
    ops: BallOperators


# Maps (k, P) -> BallSetup
_SETUPS: Dict[Tuple[float, int], BallSetup] = {}


def get_setup(k: float, P: int, resolution: Optional[Tuple[int, int]] = None) -> BallSetup:
    """Return the assembled setup for (k, P), building it on first use."""
    key = (float(k), int(P))
    setup = _SETUPS.get(key)
    if setup is not None and resolution is None:
        return setup

    n_r, n_theta = resolution or default_resolution(P)
    quad = build_quadrature(float(k), n_r, n_theta, float(k))
    basis = build_basis(float(k), P, quad)
    setup = BallSetup(k=float(k), P=P, quad=quad, basis=basis, ops=assemble_operators(basis, quad))
    if resolution is None:
        _SETUPS[key] = setup

    log.info("[cache] assembled k=%s P=%d (n_r=%d, n_theta=%d)", k, P, n_r, n_theta)
    return setup


def get_params(k: float, nu: float) -> FeneParams:
    return make_params(float(k), float(nu))


def clear() -> None:
    """Forget every cached setup (tests use this between parametrizations)."""
    _SETUPS.clear()
    log.debug("[cache] cleared")
