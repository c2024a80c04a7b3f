# time_integrator.py
#
# IMEX time stepping of the coupled system.
#
# Per Fourier mode the state is z = (a, c_hat) with u_hat = a e(xi). The stiff
# part L (diffusion, relaxation and, with implicit coupling, the stress/drag
# exchange) is solved exactly per mode; advection and the psi-drag term are
# explicit.

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ball_basis import BallOperators, FeneParams
from diagnostics import DiagnosticsConfig, EnergyAccumulator, measure
from errors import (
    BlowUpError,
    ConfigError,
    DomainError,
    NumericalBreakdownError,
    StepRejectedError,
)
from micromacro_core import (
    FULL_COUPLING,
    CouplingTerms,
    MicroMacroState,
    compute_stress_field,
    drag_source_hat,
    psi_drag_hat,
    reconstruct_du,
    rhs_distribution,
)
from torus_spectral import (
    TorusGrid,
    VectorField,
    advect,
    grid_for,
    random_scalar_fields,
    random_solenoidal,
    sobolev_weight,
    transverse_unit,
)

log = logging.getLogger(__name__)

SCHEMES = {"imex-euler": 1.0, "cnab": 0.5}
COUPLINGS = ("implicit", "explicit")

CHECKPOINT_FORMAT = "fene-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    scheme: str = "cnab"
    T_final: float = 10.0
    cfl_safety: float = 0.5
    coupling: str = "implicit"
    terms: CouplingTerms = FULL_COUPLING

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {sorted(SCHEMES)}")
        if self.coupling not in COUPLINGS:
            raise ConfigError(f"unknown coupling {self.coupling!r}; expected one of {COUPLINGS}")
        if not self.dt > 0.0:
            raise ConfigError(f"dt must be positive (got {self.dt})")
        if self.T_final < 0.0:
            raise ConfigError(f"T_final must be nonnegative (got {self.T_final})")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigError(f"cfl_safety must lie in (0, 1] (got {self.cfl_safety})")

    @property
    def theta(self) -> float:
        return SCHEMES[self.scheme]

    @property
    def order(self) -> int:
        return 1 if self.scheme == "imex-euler" else 2

    @property
    def n_steps(self) -> int:
        return int(round(self.T_final / self.dt))


# ---------------------------------------------------------------------------
# Implicit solver
# ---------------------------------------------------------------------------


@dataclass
class _Factors:
    shift: float     # theta * dt
    d: np.ndarray    # (Q-1, M, Mh) diagonal in the stiffness eigenbasis
    d0: np.ndarray   # (M, Mh) for the mass coefficient
    schur: Optional[np.ndarray]


class ImplicitSolverCache:
    """Factorizations of I - theta dt L, one per distinct |xi|^2.

    Rebuilt only when (dt, nu, theta) changes.
    """

    def __init__(self, ops: BallOperators, grid: TorusGrid, nu: float, coupled: bool):
        self.grid = grid
        self.nu = nu
        self.coupled = coupled
        self.eigvals = ops.relax_eigvals
        self.eigvecs = ops.relax_eigvecs

        if coupled:
            e = transverse_unit(grid)
            k = grid.k
            g = 1j * np.einsum("rxy,mxy,rmp->pxy", e, k, ops.stress[:, :, 1:])
            h = 1j * np.einsum("ixy,jxy,ijp->pxy", e, k, ops.drag_source[:, :, 1:])
            self.g = np.tensordot(self.eigvecs.T, g, axes=1)
            self.h = np.tensordot(self.eigvecs.T, h, axes=1)
        else:
            self.g = self.h = None

        self._unique_k2, self._k2_index = np.unique(grid.k2, return_inverse=True)
        self._key: Optional[Tuple[float, float, float]] = None
        self._factors: Optional[_Factors] = None
        self.rebuilds = 0

    def factors(self, dt: float, theta: float) -> _Factors:
        key = (dt, self.nu, theta)
        if key == self._key:
            return self._factors

        shift = theta * dt
        grid = self.grid
        per_shell = 1.0 + shift * (self.nu * self._unique_k2[:, None] + self.eigvals[None, :])
        d = per_shell[self._k2_index.ravel()].reshape(grid.M, grid.Mh, -1)
        d = np.moveaxis(d, -1, 0)
        d0 = 1.0 + shift * self.nu * grid.k2
        schur = None
        if self.coupled:
            schur = 1.0 - shift**2 * np.sum(self.g * self.h / d, axis=0)

        self._key = key
        self._factors = _Factors(shift=shift, d=d, d0=d0, schur=schur)
        self.rebuilds += 1
        log.debug(
            "[cache] implicit factors rebuilt dt=%g theta=%g (%d distinct |xi|^2)",
            dt, theta, self._unique_k2.size,
        )
        return self._factors

    def apply(self, a: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(L z) for z = (a, c_hat)."""
        y = np.tensordot(self.eigvecs.T, c[1:], axes=1)
        Ly = -(self.nu * self.grid.k2[None] + self.eigvals[:, None, None]) * y
        La = np.zeros_like(a)
        if self.coupled:
            La = np.sum(self.g * y, axis=0)
            Ly = Ly + self.h * a
        Lc = np.empty_like(c)
        Lc[0] = -self.nu * self.grid.k2 * c[0]
        Lc[1:] = np.tensordot(self.eigvecs, Ly, axes=1)
        return La, Lc

    def solve(self, f: _Factors, r_a: np.ndarray, r_c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Solve (I - shift L) z = r."""
        y = np.tensordot(self.eigvecs.T, r_c[1:], axes=1)
        if self.coupled:
            a = (r_a + f.shift * np.sum(self.g * y / f.d, axis=0)) / f.schur
            y = (y + f.shift * self.h * a) / f.d
        else:
            a = r_a
            y = y / f.d
        c = np.empty_like(r_c)
        c[0] = r_c[0] / f.d0
        c[1:] = np.tensordot(self.eigvecs, y, axes=1)
        return a, c


# ---------------------------------------------------------------------------
# Stepper
# ---------------------------------------------------------------------------


class ImexStepper:
    def __init__(self, ops: BallOperators, params: FeneParams, scheme: SchemeConfig, grid: TorusGrid):
        self.ops = ops
        self.params = params
        self.scheme = scheme
        self.grid = grid
        self.coupled = scheme.coupling == "implicit"
        self.cache = ImplicitSolverCache(ops, grid, params.nu, self.coupled)
        self.e = transverse_unit(grid)
        self._previous: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self.steps = 0

    def reset(self) -> None:
        self._previous = None
        self.steps = 0

    def max_stable_dt(self, state: MicroMacroState) -> float:
        umax = float(np.max(np.abs(state.u.physical)))
        if umax == 0.0:
            return float("inf")
        return self.scheme.cfl_safety * self.grid.dx / umax

    def explicit_terms(self, state: MicroMacroState) -> Tuple[np.ndarray, np.ndarray]:
        grid = self.grid
        terms = self.scheme.terms
        u_hat = state.u.hat
        ch = state.psi_hat

        E_u = np.zeros_like(u_hat)
        E_c = np.zeros_like(ch)
        if terms.advection:
            E_u = E_u - advect(state.u, u_hat)
            E_c = E_c - advect(state.u, ch)
        if terms.psi_drag:
            E_c = E_c + psi_drag_hat(state.u, state.psi, self.ops)
        if not self.coupled:
            E_u = E_u + compute_stress_field(state, self.ops).divergence_hat()
            E_c = E_c + drag_source_hat(u_hat, self.ops, grid)

        E_a = np.sum(self.e * E_u, axis=0)
        return E_a, grid.dealias(E_c)

    def step(self, state: MicroMacroState, dt: Optional[float] = None) -> MicroMacroState:
        dt = self.scheme.dt if dt is None else dt
        limit = self.max_stable_dt(state)
        if dt > limit:
            raise StepRejectedError(
                f"dt={dt:.4g} exceeds the advective limit {limit:.4g} at t={state.t:.4g}",
                suggested_dt=limit,
            )

        a = np.sum(self.e * state.u.hat, axis=0)
        c = state.psi_hat
        E_a, E_c = self.explicit_terms(state)

        if self.scheme.scheme == "imex-euler" or self._previous is None:
            # CNAB starts from an extrapolation with E^{-1} = E^0
            prev_a, prev_c = E_a, E_c
        else:
            prev_a, prev_c = self._previous

        theta = self.scheme.theta
        if theta == 1.0:
            r_a = a + dt * E_a
            r_c = c + dt * E_c
        else:
            La, Lc = self.cache.apply(a, c)
            r_a = a + (1.0 - theta) * dt * La + dt * (1.5 * E_a - 0.5 * prev_a)
            r_c = c + (1.0 - theta) * dt * Lc + dt * (1.5 * E_c - 0.5 * prev_c)

        self._previous = (E_a, E_c)
        a_new, c_new = self.cache.solve(self.cache.factors(dt, theta), r_a, r_c)

        if not (np.all(np.isfinite(a_new)) and np.all(np.isfinite(c_new))):
            raise NumericalBreakdownError(f"non-finite state after step to t={state.t + dt:.6g}")

        grid = self.grid
        u_new = VectorField(grid, grid.dealias(self.e * a_new), solenoidal=True)
        c_new = grid.dealias(c_new)
        self.steps += 1
        return MicroMacroState(u_new, grid.inverse(c_new), state.t + dt)


def imex_step(
    state: MicroMacroState,
    ops: BallOperators,
    params: FeneParams,
    scheme: SchemeConfig,
    stepper: Optional[ImexStepper] = None,
) -> MicroMacroState:
    """One step; pass the same `stepper` across calls to keep the CNAB history and cache."""
    if stepper is None:
        stepper = ImexStepper(ops, params, scheme, state.grid)
    return stepper.step(state)


def step_du_residual(
    before: MicroMacroState,
    after: MicroMacroState,
    ops: BallOperators,
    params: FeneParams,
    scheme: SchemeConfig,
) -> float:
    """Moment-identity residual of one step, remaining terms at the scheme's evaluation point."""
    dt = after.t - before.t
    tendency = (after.psi - before.psi) / dt
    if scheme.scheme == "imex-euler":
        point = before
    else:
        grid = before.grid
        point = MicroMacroState(
            VectorField(grid, 0.5 * (before.u.hat + after.u.hat), solenoidal=True),
            0.5 * (before.psi + after.psi),
            0.5 * (before.t + after.t),
        )
    return reconstruct_du(point, tendency, ops, params, scheme.terms).residual


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


def initial_state(
    grid: TorusGrid,
    ops: BallOperators,
    epsilon: float,
    xi_cutoff: Optional[float],
    seed: int,
    s: int = 3,
) -> MicroMacroState:
    """Random band-limited data with ||u||_s = ||psi||_{s,L2} = epsilon."""
    if epsilon < 0.0:
        raise DomainError(f"epsilon must be nonnegative (got {epsilon})")
    state = MicroMacroState.zeros(grid, ops.Q)
    if epsilon == 0.0:
        return state

    rng = np.random.default_rng(seed)
    weight = sobolev_weight(grid, s)

    u = random_solenoidal(grid, rng, xi_cutoff)
    u_norm = np.sqrt(grid.inner(weight * u.hat, u.hat))
    u = VectorField(grid, u.hat * (epsilon / u_norm), solenoidal=True)

    psi = np.zeros((ops.Q, grid.M, grid.M))
    psi[1:] = random_scalar_fields(grid, rng, ops.Q - 1, xi_cutoff)
    ch = grid.forward(psi)
    psi_norm = np.sqrt(grid.inner(weight * ch, ch))
    psi *= epsilon / psi_norm

    log.debug("[init] seed=%d epsilon=%g xi_cutoff=%s", seed, epsilon, xi_cutoff)
    return MicroMacroState(u, psi, 0.0)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    records: List[Any]
    final_state: MicroMacroState
    steps: int
    snapshots: List[MicroMacroState] = field(default_factory=list)


def run_simulation(
    initial: MicroMacroState,
    ops: BallOperators,
    params: FeneParams,
    scheme: SchemeConfig,
    diagnostics: DiagnosticsConfig,
    on_record: Optional[Callable[[Any], None]] = None,
    keep_snapshots: bool = False,
) -> Trajectory:
    """March to T_final, emitting one diagnostics record every `record_every` steps."""
    stepper = ImexStepper(ops, params, scheme, initial.grid)
    accumulator = EnergyAccumulator(params.nu)
    a = diagnostics.coupling_weight(ops, params)

    tendency = rhs_distribution(initial, ops, params, scheme.terms)
    first_du = reconstruct_du(initial, tendency, ops, params, scheme.terms).residual
    record = measure(initial, ops, params, diagnostics, accumulator, a, first_du)
    records = [record]
    snapshots = [initial] if keep_snapshots else []
    if on_record:
        on_record(record)

    state = initial
    n_steps = scheme.n_steps
    log.info(
        "[run] %s/%s dt=%g steps=%d record_every=%d",
        scheme.scheme, scheme.coupling, scheme.dt, n_steps, diagnostics.record_every,
    )
    for n in range(1, n_steps + 1):
        try:
            new = stepper.step(state)
        except NumericalBreakdownError as exc:
            raise BlowUpError(str(exc), last_record=records[-1]) from exc

        if n % diagnostics.record_every == 0:
            du = step_du_residual(state, new, ops, params, scheme)
            record = measure(new, ops, params, diagnostics, accumulator, a, du)
            if not record.is_finite():
                raise BlowUpError(f"non-finite diagnostics at t={new.t:.6g}", last_record=records[-1])
            records.append(record)
            if keep_snapshots:
                snapshots.append(new)
            if on_record:
                on_record(record)
        state = new

    if n_steps % diagnostics.record_every:
        log.warning(
            "[run] final state at t=%g is off the record grid and was not recorded", state.t
        )
    return Trajectory(records=records, final_state=state, steps=n_steps, snapshots=snapshots)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: Path, state: MicroMacroState, params: FeneParams, echo: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "t": state.t,
        "L_box": state.grid.L_box,
        "M": state.grid.M,
        "Q": int(state.psi.shape[0]),
        "P": int(round((np.sqrt(8 * state.psi.shape[0] + 1) - 3) / 2)),
        "k": params.k,
        "nu": params.nu,
        "config": echo or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), u_hat=state.u.hat, psi=state.psi)
    log.info("[checkpoint] wrote %s at t=%g", path, state.t)
    return path


def load_checkpoint(path: Path) -> Tuple[MicroMacroState, Dict[str, Any]]:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"{path} is not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} file")
        grid = grid_for(float(header["L_box"]), int(header["M"]))
        u = VectorField(grid, np.array(data["u_hat"]), solenoidal=True)
        psi = np.array(data["psi"])
    return MicroMacroState(u, psi, float(header["t"])), header
