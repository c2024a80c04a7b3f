# diagnostics.py
#
# Norms, energy functionals, the Lyapunov pair (f, g), Fourier-splitting
# masses and decay-rate fits computed from a running simulation.

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from ball_basis import BallOperators, FeneParams, spectral_gap
from errors import DomainError, InsufficientRangeError, ResamplingError
from micromacro_core import MicroMacroState, deformation_hat
from torus_spectral import TorusGrid, sobolev_weight

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t",
    "u_l2",
    "u_h1",
    "u_hs",
    "grad_u_hsm1",
    "psi_L2",
    "psi_1L2",
    "psi_sL2",
    "grad_psi_sL2",
    "psi_sH1dot",
    "E1",
    "E2",
    "f",
    "g",
    "split_u",
    "split_psi",
    "du_residual",
    "mass_max",
    "div_max",
)

NORM_COLUMNS = CSV_COLUMNS[1:10]

ALGEBRAIC_SPREAD = 0.25


@dataclass
class DiagnosticsConfig:
    s: int = 3
    a: Optional[float] = None
    eta: Optional[float] = None
    s_exp: float = 2.0
    record_every: int = 10

    def __post_init__(self):
        if self.s < 1:
            raise DomainError(f"diagnostics.s must be at least 1 (got {self.s})")
        if self.a is not None and self.a <= 0.0:
            raise DomainError(f"coupling weight a must be positive (got {self.a})")
        if (self.eta is not None and self.eta <= 0.0) or self.s_exp <= 0.0:
            raise DomainError("eta and s_exp must be positive")
        if self.record_every < 1:
            raise DomainError(f"record_every must be at least 1 (got {self.record_every})")

    def coupling_weight(self, ops: BallOperators, params: FeneParams) -> float:
        if self.a is not None:
            return self.a
        return min(critical_coupling_weight(ops), 0.1 / params.Ccoef)

    def splitting_shift(self, ops: BallOperators, params: FeneParams, a: float) -> float:
        """The shift eta in d(t) = (eta + t)^s_exp; "auto" takes the smallest shift the splitting estimate allows."""
        if self.eta is not None:
            return self.eta
        return splitting_eta_floor(ops, params, a, self.s_exp)


@dataclass
class DiagnosticsRecord:
    t: float
    u_l2: float
    u_h1: float
    u_hs: float
    grad_u_hsm1: float
    psi_L2: float
    psi_1L2: float
    psi_sL2: float
    grad_psi_sL2: float
    psi_sH1dot: float
    E1: float
    E2: float
    f: float
    g: float
    split_u: float
    split_psi: float
    du_residual: float
    mass_max: float
    div_max: float
    # not part of the CSV row
    E1_alt: float = field(default=0.0, compare=False)
    saturated: bool = field(default=False, compare=False)

    def as_row(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in CSV_COLUMNS)

    @classmethod
    def from_row(cls, values: Sequence[float]) -> "DiagnosticsRecord":
        if len(values) != len(CSV_COLUMNS):
            raise DomainError(f"record row needs {len(CSV_COLUMNS)} values, got {len(values)}")
        return cls(*(float(v) for v in values))

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_row())

    def norms_nonnegative(self) -> bool:
        return all(getattr(self, name) >= 0.0 for name in NORM_COLUMNS)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


class NormSet(NamedTuple):
    u_l2: float
    u_h1: float
    u_hs: float
    grad_u_hsm1: float
    psi_L2: float
    psi_1L2: float
    psi_sL2: float
    grad_psi_sL2: float
    psi_sH1dot: float
    grad_psi_1L2: float
    psi_1H1dot: float


def _weighted(grid: TorusGrid, fh: np.ndarray, weight) -> float:
    return math.sqrt(max(grid.inner(weight * fh, fh), 0.0))


def _h1dot(grid: TorusGrid, ch: np.ndarray, ops: BallOperators, weight) -> float:
    Sc = np.tensordot(ops.stiffness, ch, axes=1)
    return math.sqrt(max(grid.inner(weight * Sc, ch), 0.0))


def weighted_norms(state: MicroMacroState, ops: BallOperators, s: int) -> NormSet:
    if s < 1:
        raise DomainError(f"Sobolev index must be at least 1 (got {s})")
    grid = state.grid
    uh = state.u.hat
    ch = state.psi_hat
    w1 = sobolev_weight(grid, 1)
    ws = sobolev_weight(grid, s)
    wsm1 = sobolev_weight(grid, s - 1)
    k2 = grid.k2

    return NormSet(
        u_l2=_weighted(grid, uh, 1.0),
        u_h1=_weighted(grid, uh, w1),
        u_hs=_weighted(grid, uh, ws),
        grad_u_hsm1=_weighted(grid, uh, k2 * wsm1),
        psi_L2=_weighted(grid, ch, 1.0),
        psi_1L2=_weighted(grid, ch, w1),
        psi_sL2=_weighted(grid, ch, ws),
        grad_psi_sL2=_weighted(grid, ch, k2 * ws),
        psi_sH1dot=_h1dot(grid, ch, ops, ws),
        grad_psi_1L2=_weighted(grid, ch, k2 * w1),
        psi_1H1dot=_h1dot(grid, ch, ops, w1),
    )


# ---------------------------------------------------------------------------
# Energy functionals
# ---------------------------------------------------------------------------


class EnergyAccumulator:
    """Running sup / trapezoid integrals behind E1, E1_alt and E2."""

    def __init__(self, nu: float):
        self.nu = nu
        self._t: Optional[float] = None
        self._sup_u = 0.0
        self._sup_psi = 0.0
        self._prev: Tuple[float, float, float] = (0.0, 0.0, 0.0)
        self._integrals = [0.0, 0.0, 0.0]

    def update(self, t: float, u_hs: float, psi_sL2: float, grad_psi_sL2: float,
               psi_sH1dot: float, grad_u_hsm1: float) -> Tuple[float, float, float]:
        """Returns (E1, E2, E1_alt) up to time t."""
        self._sup_u = max(self._sup_u, u_hs**2)
        self._sup_psi = max(self._sup_psi, psi_sL2**2)
        current = (
            self.nu * (grad_psi_sL2**2 + psi_sH1dot**2),
            grad_u_hsm1**2,
            self.nu * grad_psi_sL2**2 + psi_sH1dot**2,
        )
        if self._t is not None:
            dt = t - self._t
            for i in range(3):
                self._integrals[i] += 0.5 * dt * (self._prev[i] + current[i])
        self._t = t
        self._prev = current

        E1 = self._sup_u + self._sup_psi + self._integrals[0]
        E2 = self._integrals[1]
        E1_alt = self._sup_u + self._sup_psi + self._integrals[2]
        return E1, E2, E1_alt


class EnergyFunctionals(NamedTuple):
    t: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    E1_alt: np.ndarray


def _check_uniform(times: np.ndarray) -> None:
    if times.size < 3:
        return
    steps = np.diff(times)
    mean = float(np.mean(steps))
    if mean <= 0.0 or float(np.max(np.abs(steps - mean))) > 1e-9 * max(mean, 1.0):
        raise ResamplingError("record times are not uniformly spaced")


def energy_functionals(records: Sequence[DiagnosticsRecord], nu: float) -> EnergyFunctionals:
    """Recompute E1, E2 and E1_alt (nu on the gradient term only) from a uniformly spaced record stream."""
    times = np.array([r.t for r in records], dtype=float)
    _check_uniform(times)
    acc = EnergyAccumulator(nu)
    rows = [
        acc.update(r.t, r.u_hs, r.psi_sL2, r.grad_psi_sL2, r.psi_sH1dot, r.grad_u_hsm1)
        for r in records
    ]
    E1, E2, E1_alt = (np.array(col) for col in zip(*rows)) if rows else (np.zeros(0),) * 3
    return EnergyFunctionals(times, E1, E2, E1_alt)


# ---------------------------------------------------------------------------
# Lyapunov pair
# ---------------------------------------------------------------------------


class LyapunovPair(NamedTuple):
    f: float
    g: float
    theta: float  # ||u||_1^2 + ||psi||_{1,L2}^2


def moment_norm(ops: BallOperators) -> float:
    """Operator norm of the moment map c -> m2 c; bounds |cross| by sigma ||psi|| ||Du||."""
    return float(linalg.svdvals(ops.moments.reshape(4, ops.Q))[0])


def critical_coupling_weight(ops: BallOperators) -> float:
    """Largest a for which f stays within [Theta/2, 2 Theta]."""
    return 1.0 / (2.0 * moment_norm(ops))


def lyapunov_pair(
    state: MicroMacroState, ops: BallOperators, params: FeneParams, a: float
) -> LyapunovPair:
    if a < 0.0:
        raise DomainError(f"coupling weight a must be nonnegative (got {a})")
    grid = state.grid
    norms = weighted_norms(state, ops, 1)
    ch = state.psi_hat
    D = deformation_hat(state.u.hat, grid)
    moment = np.einsum("jkp,pxy->jkxy", ops.moments, ch)
    cross = grid.inner(moment, D)
    theta = norms.u_h1**2 + norms.psi_1L2**2
    f = theta - 2.0 * a * cross
    g = (
        params.nu * norms.grad_psi_1L2**2
        + norms.psi_1H1dot**2
        + 2.0 * a * params.Ccoef * grid.inner(D, D)
    )
    return LyapunovPair(f=f, g=g, theta=theta)


# ---------------------------------------------------------------------------
# Fourier splitting
# ---------------------------------------------------------------------------


class SplitMass(NamedTuple):
    mass: float
    radius: float
    saturated: bool


def splitting_eta_floor(ops: BallOperators, params: FeneParams, a: float, s_exp: float = 2.0) -> float:
    """Smallest eta with s_exp / eta * X <= Y for every state, so splitting_margins stay nonnegative.

    X = f - ||u||^2 and Y = ||psi||_{1,H1dot}^2 + a C ||Du||^2 (the part of g left once the
    high-frequency velocity is paid for). Poincare gives ||psi||_{1,H1dot}^2 >= lambda_min
    ||psi||_{1,L2}^2, incompressibility gives ||grad u||^2 = 2 ||Du||^2 and the cross term is
    at most sigma (||psi||^2 + ||Du||^2) / 2 with sigma = moment_norm(ops).
    """
    if a <= 0.0 or s_exp <= 0.0:
        raise DomainError("a and s_exp must be positive")
    lam = spectral_gap(ops).lambda_min
    a_sigma = a * moment_norm(ops)
    return max(s_exp * (1.0 + a_sigma) / lam, s_exp * (2.0 + a_sigma) / (a * params.Ccoef))


def split_radius(t: float, a: float, Ccoef: float, eta: float, s_exp: float) -> float:
    return math.sqrt(2.0 * s_exp / (a * Ccoef * (eta + t)))


def fourier_split_mass(
    field_hat: np.ndarray,
    grid: TorusGrid,
    t: float,
    a: float,
    Ccoef: float,
    eta: float = 1.0,
    s_exp: float = 2.0,
) -> SplitMass:
    """L2 mass of the modes inside the shrinking ball |xi| <= r(t).

    Saturated once r(t) drops below the lattice spacing; only the mean mode is left then.
    """
    if a <= 0.0 or eta <= 0.0 or s_exp <= 0.0:
        raise DomainError("a, eta and s_exp must be positive")
    radius = split_radius(t, a, Ccoef, eta, s_exp)
    inside = grid.k2 <= radius**2
    density = np.abs(field_hat) ** 2 * grid.pair_weight * inside
    mass = float(grid.volume_factor * np.sum(density))
    return SplitMass(mass=mass, radius=radius, saturated=radius < grid.dk)


def saturation_time(L_box: float, a: float, Ccoef: float, eta: float = 1.0, s_exp: float = 2.0) -> float:
    """First t with r(t) = 2 pi / L_box; grows like L_box^2."""
    return max(0.0, 2.0 * s_exp * L_box**2 / (a * Ccoef * 4.0 * math.pi**2) - eta)


def splitting_margins(
    records: Sequence[DiagnosticsRecord], eta: float = 1.0, s_exp: float = 2.0
) -> np.ndarray:
    """d'(t) split_u - d/dt (d f) on each record interval, with d(t) = (eta + t)^s_exp.

    Nonnegative (up to time-discretization error) when the splitting argument applies.
    """
    t = np.array([r.t for r in records])
    f = np.array([r.f for r in records])
    split = np.array([r.split_u for r in records])
    d = (eta + t) ** s_exp
    mid = 0.5 * (t[1:] + t[:-1])
    d_prime = s_exp * (eta + mid) ** (s_exp - 1.0)
    growth = np.diff(d * f) / np.diff(t)
    return d_prime * 0.5 * (split[1:] + split[:-1]) - growth


# ---------------------------------------------------------------------------
# Decay fits
# ---------------------------------------------------------------------------


class DecayFit(NamedTuple):
    alpha: float
    stderr: float
    residual: float
    window: Tuple[float, float]
    algebraic: bool
    half_alphas: Tuple[float, float]


def _slope(x: np.ndarray, y: np.ndarray):
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    return fit, float(np.sqrt(np.mean(resid**2)))


def decay_fit(
    records: Sequence[DiagnosticsRecord],
    quantity: str,
    window: Optional[Tuple[float, float]] = None,
    t_sat: Optional[float] = None,
) -> DecayFit:
    """Least-squares fit of log(norm) against log(1+t); alpha is the decay exponent."""
    if quantity not in CSV_COLUMNS:
        raise DomainError(f"unknown record quantity {quantity!r}")
    t = np.array([r.t for r in records], dtype=float)
    y = np.array([getattr(r, quantity) for r in records], dtype=float)

    if window is None:
        if t_sat is None:
            saturated = [r.t for r in records if r.saturated]
            t_sat = saturated[0] if saturated else None
        end = 0.5 * t_sat if t_sat is not None else (float(t[-1]) if t.size else 0.0)
        window = (5.0, end)

    t0, t1 = window
    sel = (t >= t0) & (t <= t1) & (y > 0.0)
    if np.count_nonzero(sel) < 3:
        raise InsufficientRangeError(f"fewer than 3 positive samples in window [{t0}, {t1}]")
    ts = t[sel]
    if math.log10((1.0 + ts[-1]) / (1.0 + ts[0])) < 1.0:
        raise InsufficientRangeError(
            f"fit window [{ts[0]:.4g}, {ts[-1]:.4g}] spans less than one decade in 1+t"
        )

    x = np.log1p(ts)
    ly = np.log(y[sel])
    fit, residual = _slope(x, ly)

    split = 0.5 * (x[0] + x[-1])
    lo, hi = x <= split, x >= split
    halves = (float("nan"), float("nan"))
    algebraic = True
    if np.count_nonzero(lo) >= 2 and np.count_nonzero(hi) >= 2:
        halves = (-_slope(x[lo], ly[lo])[0].slope, -_slope(x[hi], ly[hi])[0].slope)
        scale = max(abs(fit.slope), 1e-12)
        algebraic = abs(halves[0] - halves[1]) <= ALGEBRAIC_SPREAD * scale
    if not algebraic:
        log.warning(
            "[fit] %s: half-window exponents %.3g and %.3g disagree; decay is not algebraic",
            quantity, halves[0], halves[1],
        )

    return DecayFit(
        alpha=-float(fit.slope),
        stderr=float(fit.stderr),
        residual=residual,
        window=(float(ts[0]), float(ts[-1])),
        algebraic=algebraic,
        half_alphas=halves,
    )


# ---------------------------------------------------------------------------
# Linear energy balance
# ---------------------------------------------------------------------------


class EnergySample(NamedTuple):
    t: float
    energy: float
    dissipation: float


def linear_energy(state: MicroMacroState, ops: BallOperators, params: FeneParams) -> EnergySample:
    """||u||^2 + ||psi||^2_L2 and its dissipation rate 2 nu ||grad psi||^2 + 2 |psi|^2_H1dot."""
    grid = state.grid
    ch = state.psi_hat
    energy = grid.inner(state.u.hat, state.u.hat) + grid.inner(ch, ch)
    grad_psi2 = grid.inner(grid.k2 * ch, ch)
    h1 = _h1dot(grid, ch, ops, 1.0)
    return EnergySample(state.t, energy, 2.0 * params.nu * grad_psi2 + 2.0 * h1**2)


def energy_balance_residuals(samples: Sequence[EnergySample]) -> np.ndarray:
    """(E_{n+1} - E_n)/dt + (D_n + D_{n+1})/2 per step."""
    t = np.array([s.t for s in samples])
    E = np.array([s.energy for s in samples])
    D = np.array([s.dissipation for s in samples])
    return np.diff(E) / np.diff(t) + 0.5 * (D[1:] + D[:-1])


# ---------------------------------------------------------------------------
# Record assembly
# ---------------------------------------------------------------------------


def measure(
    state: MicroMacroState,
    ops: BallOperators,
    params: FeneParams,
    config: DiagnosticsConfig,
    accumulator: EnergyAccumulator,
    a: float,
    du_residual: float,
) -> DiagnosticsRecord:
    norms = weighted_norms(state, ops, config.s)
    E1, E2, E1_alt = accumulator.update(
        state.t, norms.u_hs, norms.psi_sL2, norms.grad_psi_sL2, norms.psi_sH1dot, norms.grad_u_hsm1
    )
    pair = lyapunov_pair(state, ops, params, a)
    grid = state.grid
    eta = config.splitting_shift(ops, params, a)
    split_u = fourier_split_mass(state.u.hat, grid, state.t, a, params.Ccoef, eta, config.s_exp)
    split_psi = fourier_split_mass(state.psi_hat, grid, state.t, a, params.Ccoef, eta, config.s_exp)

    record = DiagnosticsRecord(
        t=state.t,
        u_l2=norms.u_l2,
        u_h1=norms.u_h1,
        u_hs=norms.u_hs,
        grad_u_hsm1=norms.grad_u_hsm1,
        psi_L2=norms.psi_L2,
        psi_1L2=norms.psi_1L2,
        psi_sL2=norms.psi_sL2,
        grad_psi_sL2=norms.grad_psi_sL2,
        psi_sH1dot=norms.psi_sH1dot,
        E1=E1,
        E2=E2,
        f=pair.f,
        g=pair.g,
        split_u=split_u.mass,
        split_psi=split_psi.mass,
        du_residual=du_residual,
        mass_max=state.mass_max,
        div_max=state.div_max,
        E1_alt=E1_alt,
        saturated=split_u.saturated,
    )
    log.debug("[record] t=%.6g u_h1=%.4e psi_1L2=%.4e f=%.4e", state.t, record.u_h1, record.psi_1L2, record.f)
    return record


def records_from_rows(rows: Iterable[Sequence[float]]) -> List[DiagnosticsRecord]:
    return [DiagnosticsRecord.from_row(row) for row in rows]
