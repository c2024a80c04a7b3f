# ball_basis.py
#
# Everything that depends only on the spring elongation R in the unit disk B:
# equilibrium weight, Gauss-Jacobi quadrature, the weighted-orthonormal
# polynomial basis, Galerkin operators, model constants and the discrete
# Poincare / Hardy ratios.

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, NamedTuple, Tuple

import numpy as np
from scipy import linalg
from scipy.special import eval_jacobi, roots_jacobi

from errors import (
    AssemblyError,
    DegenerateInputError,
    DomainError,
    IntegrabilityError,
    InvalidWeightError,
    ResolutionError,
)

log = logging.getLogger(__name__)

CONFIG_DIM = 2

GRAM_TOL = 1e-12
SYMMETRY_TOL = 1e-12
RATIO_TOL = 1e-10


def default_resolution(P: int) -> Tuple[int, int]:
    """(n_r, n_theta) used when the caller does not pick a quadrature size."""
    return P + 6, 4 * P + 8


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BallQuadrature:
    """Tensor rule on B for integrals of the form  int_B f(R) (1-|R|^2)^alpha dR.

    Radial nodes are Gauss-Jacobi in x = 2r^2 - 1, angular nodes uniform.
    """

    k: float
    alpha: float
    n_r: int
    n_theta: int
    radii: np.ndarray
    radial_weights: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    weights: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.weights.size)

    @property
    def r(self) -> np.ndarray:
        return np.hypot(self.R1, self.R2)

    def integrate(self, values) -> np.ndarray | float:
        """Contract the last axis of `values` (node values) with the weights."""
        out = np.asarray(values) @ self.weights
        return float(out) if np.ndim(out) == 0 else out


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=64)
def build_quadrature(k: float, n_r: int, n_theta: int, alpha: float) -> BallQuadrature:
    """Quadrature exact for r^(2p) (1-r^2)^alpha up to polynomial degree 2 n_r - 1 in r^2.

    Cached; the arrays of the returned rule are read-only.
    """
    if alpha <= -1.0:
        raise InvalidWeightError(f"weight exponent alpha={alpha} must exceed -1")
    if n_r < 1 or n_theta < 1:
        raise ResolutionError(f"quadrature needs n_r >= 1 and n_theta >= 1, got {n_r}, {n_theta}")

    x, w = roots_jacobi(n_r, alpha, 0.0)
    radii = np.sqrt((1.0 + x) / 2.0)
    # r dr = dx / 4 and (1 - r^2)^alpha = 2^-alpha (1 - x)^alpha
    radial_weights = w * 2.0 ** (-alpha - 2.0)

    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    R1 = np.outer(radii, np.cos(theta)).ravel()
    R2 = np.outer(radii, np.sin(theta)).ravel()
    weights = np.outer(radial_weights, np.full(n_theta, 2.0 * np.pi / n_theta)).ravel()

    if np.any(weights <= 0.0):
        raise AssemblyError(f"nonpositive quadrature weight for alpha={alpha}")

    log.debug(
        "[quadrature] built k=%s alpha=%s n_r=%d n_theta=%d",
        k, alpha, n_r, n_theta,
    )
    return BallQuadrature(
        k=float(k),
        alpha=float(alpha),
        n_r=n_r,
        n_theta=n_theta,
        radii=_frozen(radii),
        radial_weights=_frozen(radial_weights),
        R1=_frozen(R1),
        R2=_frozen(R2),
        weights=_frozen(weights),
    )


@lru_cache(maxsize=64)
def normalization(k: float) -> float:
    """Z = int_B (1-|R|^2)^k dR."""
    if k <= 0:
        raise DomainError(f"spring exponent k={k} must be positive")
    quad = build_quadrature(k, 2, 4, float(k))
    return quad.integrate(np.ones(quad.n_nodes))


def equilibrium_weight(k: float, R) -> np.ndarray | float:
    """psi_inf(R) = (1-|R|^2)^k / Z for R in the closed unit disk (last axis = components)."""
    R = np.asarray(R, dtype=float)
    if R.shape[-1] != CONFIG_DIM:
        raise DomainError(f"R must have {CONFIG_DIM} components, got shape {R.shape}")
    rr = np.sum(R * R, axis=-1)
    if np.any(rr > 1.0 + 1e-14):
        raise DomainError("equilibrium weight requested outside the unit disk")
    out = np.clip(1.0 - rr, 0.0, None) ** k / normalization(k)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Model parameters and constants
# ---------------------------------------------------------------------------


class ModelConstants(NamedTuple):
    c1: float
    c2: float
    Ccoef: float


def compute_model_constants(k: float, quad: BallQuadrature) -> ModelConstants:
    """c1, c2 of the drag closure and the moment constant C = 2 int R1^2 psi_inf."""
    if k <= 1.0:
        raise IntegrabilityError(
            f"k must exceed 1 for the drag-closure integrals to converge (got k={k})"
        )
    if quad.n_r < 2 or quad.n_theta < 5:
        raise ResolutionError("model constants need n_r >= 2 and n_theta >= 5")

    mass = build_quadrature(k, quad.n_r, quad.n_theta, float(k))
    singular = build_quadrature(k, quad.n_r, quad.n_theta, float(k) - 2.0)
    Z = mass.integrate(np.ones(mass.n_nodes))

    # d_{R_i} psi_inf / (1-|R|^2) = -2k R_i (1-|R|^2)^(k-2) / Z
    grad_factor = -2.0 * k / Z
    c1 = -2.0 * k * singular.integrate(singular.R1**3 * grad_factor * singular.R1)
    c2 = -2.0 * k * singular.integrate(singular.R1**2 * singular.R2 * grad_factor * singular.R2)
    Ccoef = 2.0 * mass.integrate(mass.R1**2) / Z

    if c2 <= 0.0 or Ccoef <= 0.0:
        raise AssemblyError(f"nonpositive model constants c2={c2}, C={Ccoef}")
    if abs(c1 / c2 - 3.0) > RATIO_TOL:
        raise AssemblyError(f"c1/c2 = {c1 / c2!r}, expected 3")
    return ModelConstants(c1=c1, c2=c2, Ccoef=Ccoef)


@dataclass(frozen=True)
class FeneParams:
    k: float
    nu: float
    Z: float
    Ccoef: float
    c1: float
    c2: float
    d_config: int = CONFIG_DIM


def make_params(k: float, nu: float) -> FeneParams:
    if k <= 1.0:
        raise IntegrabilityError(f"k must exceed 1 (got k={k})")
    if nu < 0.0:
        raise DomainError(f"nu must be nonnegative (got nu={nu})")
    quad = build_quadrature(k, 8, 16, float(k))
    consts = compute_model_constants(k, quad)
    return FeneParams(
        k=float(k),
        nu=float(nu),
        Z=normalization(k),
        Ccoef=consts.Ccoef,
        c1=consts.c1,
        c2=consts.c2,
    )


# ---------------------------------------------------------------------------
# Basis
# ---------------------------------------------------------------------------


class BasisMode(NamedTuple):
    degree: int  # total degree 2j + m
    m: int       # angular frequency
    kind: str    # "c" (cos) or "s" (sin)
    j: int       # radial Jacobi degree


def _modes(P: int) -> List[BasisMode]:
    modes = []
    for n in range(P + 1):
        for m in range(n % 2, n + 1, 2):
            j = (n - m) // 2
            modes.append(BasisMode(n, m, "c", j))
            if m > 0:
                modes.append(BasisMode(n, m, "s", j))
    return modes


def _raw_values(k: float, modes: List[BasisMode], R1, R2, with_grad: bool):
    """Unnormalized P_j^(k,m)(2r^2-1) * Re/Im (R1 + i R2)^m and, optionally, its gradient."""
    R1 = np.asarray(R1, dtype=float)
    R2 = np.asarray(R2, dtype=float)
    z = R1 + 1j * R2
    x = 2.0 * (R1 * R1 + R2 * R2) - 1.0

    vals = np.empty((len(modes),) + R1.shape)
    grads = np.empty((2, len(modes)) + R1.shape) if with_grad else None

    for p, mode in enumerate(modes):
        j, m = mode.j, mode.m
        radial = eval_jacobi(j, k, m, x)
        if m == 0:
            h = np.ones_like(R1)
            dh1 = np.zeros_like(R1)
            dh2 = np.zeros_like(R1)
        else:
            zm = z**m
            dzm = m * z ** (m - 1)
            if mode.kind == "c":
                h, dh1, dh2 = zm.real, dzm.real, -dzm.imag
            else:
                h, dh1, dh2 = zm.imag, dzm.imag, dzm.real
        vals[p] = radial * h

        if with_grad:
            if j == 0:
                dradial = np.zeros_like(R1)
            else:
                dradial = 0.5 * (j + k + m + 1) * eval_jacobi(j - 1, k + 1, m + 1, x)
            # grad x = 4 R
            grads[0, p] = 4.0 * R1 * dradial * h + radial * dh1
            grads[1, p] = 4.0 * R2 * dradial * h + radial * dh2

    return vals, grads


@dataclass(eq=False)
class BallBasis:
    """Generalized Zernike basis, orthonormal in <f, g> = int_B f g psi_inf dR."""

    k: float
    P: int
    modes: List[BasisMode]
    norms: np.ndarray
    values: np.ndarray  # (Q, n_nodes) at the build quadrature
    grads: np.ndarray   # (2, Q, n_nodes)
    gram_deviation: float

    @property
    def Q(self) -> int:
        return len(self.modes)

    def index(self, degree: int, m: int, kind: str = "c") -> int:
        for p, mode in enumerate(self.modes):
            if mode.degree == degree and mode.m == m and mode.kind == kind:
                return p
        raise KeyError((degree, m, kind))

    def evaluate(self, R1, R2) -> np.ndarray:
        vals, _ = _raw_values(self.k, self.modes, R1, R2, with_grad=False)
        return vals / self.norms.reshape((-1,) + (1,) * np.ndim(R1))

    def gradient(self, R1, R2) -> np.ndarray:
        _, grads = _raw_values(self.k, self.modes, R1, R2, with_grad=True)
        return grads / self.norms.reshape((1, -1) + (1,) * np.ndim(R1))

    def project(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray], quad: BallQuadrature) -> np.ndarray:
        """Coefficients <func, phi_p> using the mass quadrature `quad` (alpha = k)."""
        Z = quad.integrate(np.ones(quad.n_nodes))
        return self.evaluate(quad.R1, quad.R2) @ (func(quad.R1, quad.R2) * quad.weights) / Z


def build_basis(k: float, P: int, quad: BallQuadrature) -> BallBasis:
    if P < 0:
        raise DomainError(f"basis degree P={P} must be nonnegative")
    if quad.k != float(k) or quad.alpha != float(k):
        raise DomainError(
            f"basis for k={k} needs the alpha=k quadrature (got k={quad.k}, alpha={quad.alpha})"
        )
    if quad.n_r < P + 2 or quad.n_theta < 2 * (P + 1) + 1:
        raise ResolutionError(
            f"quadrature n_r={quad.n_r}, n_theta={quad.n_theta} too coarse for degree {P}; "
            f"need n_r >= {P + 2}, n_theta >= {2 * P + 3}"
        )

    modes = _modes(P)
    raw, raw_grads = _raw_values(k, modes, quad.R1, quad.R2, with_grad=True)
    Z = quad.integrate(np.ones(quad.n_nodes))
    norms = np.sqrt(quad.integrate(raw * raw) / Z)
    values = raw / norms[:, None]
    grads = raw_grads / norms[None, :, None]

    gram = (values * quad.weights) @ values.T / Z
    deviation = float(np.max(np.abs(gram - np.eye(len(modes)))))
    if deviation > GRAM_TOL:
        raise ResolutionError(f"basis Gram matrix deviates from identity by {deviation:.3e}")

    log.info("[assembly] basis k=%s P=%d Q=%d gram_dev=%.2e", k, P, len(modes), deviation)
    return BallBasis(
        k=float(k),
        P=P,
        modes=modes,
        norms=norms,
        values=values,
        grads=grads,
        gram_deviation=deviation,
    )


# ---------------------------------------------------------------------------
# Galerkin operators
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BallOperators:
    """Assembled configuration-space tensors.

    stiffness[p, q]          = int psi_inf grad phi_p . grad phi_q
    drag[i, j, p, q]         = int R_j psi_inf phi_q d_i phi_p
    drag_source[i, j, p]     = int R_j psi_inf d_i phi_p
    stress[l, m, p]          = int R_l (d_m U) psi_inf phi_p
    moments[j, k, p]         = int R_j R_k psi_inf phi_p
    closure[l, m, i, j]      = int (-R_j d_i psi_inf) R_l d_m U
    """

    k: float
    P: int
    Z: float
    stiffness: np.ndarray
    drag: np.ndarray
    drag_source: np.ndarray
    stress: np.ndarray
    moments: np.ndarray
    closure: np.ndarray
    relax_eigvals: np.ndarray  # eigenpairs of stiffness on the zero-mass block
    relax_eigvecs: np.ndarray
    basis: BallBasis
    quad: BallQuadrature
    quad_stress: BallQuadrature
    quad_hardy: BallQuadrature

    @property
    def Q(self) -> int:
        return self.basis.Q


def _symmetric_or_fail(name: str, a: np.ndarray, b: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(a))))
    asym = float(np.max(np.abs(a - b)))
    if asym > SYMMETRY_TOL * scale:
        raise AssemblyError(f"{name} not symmetric: max deviation {asym:.3e}")


def assemble_operators(basis: BallBasis, quad: BallQuadrature) -> BallOperators:
    k = basis.k
    if quad.k != k or quad.alpha != k:
        raise DomainError("basis and quadrature disagree on k")
    if basis.P < 2:
        raise ResolutionError("P must be at least 2 so quadratic moments are representable")
    if k <= 1.0:
        raise IntegrabilityError(f"k must exceed 1 (got k={k})")

    Z = quad.integrate(np.ones(quad.n_nodes))
    w = quad.weights / Z
    V = basis.values
    G = basis.grads
    R = np.stack([quad.R1, quad.R2])

    stiffness = np.einsum("dpn,dqn,n->pq", G, G, w, optimize=True)
    _symmetric_or_fail("stiffness", stiffness, stiffness.T)
    stiffness = 0.5 * (stiffness + stiffness.T)

    drag = np.einsum("ipn,qn,jn,n->ijpq", G, V, R, w, optimize=True)
    drag_source = np.einsum("ipn,jn,n->ijp", G, R, w, optimize=True)
    moments = np.einsum("jn,kn,pn,n->jkp", R, R, V, w, optimize=True)

    # R_l d_m U psi_inf = 2k R_l R_m (1-|R|^2)^(k-1) / Z
    quad_stress = build_quadrature(k, quad.n_r, quad.n_theta, k - 1.0)
    Rs = np.stack([quad_stress.R1, quad_stress.R2])
    Vs = basis.evaluate(quad_stress.R1, quad_stress.R2)
    stress = (2.0 * k / Z) * np.einsum(
        "ln,mn,pn,n->lmp", Rs, Rs, Vs, quad_stress.weights, optimize=True
    )
    _symmetric_or_fail("stress vectors", stress, stress.transpose(1, 0, 2))
    stress = 0.5 * (stress + stress.transpose(1, 0, 2))

    # (-R_j d_i psi_inf) R_l d_m U = 4k^2 R_i R_j R_l R_m (1-|R|^2)^(k-2) / Z
    quad_hardy = build_quadrature(k, quad.n_r, quad.n_theta, k - 2.0)
    Rh = np.stack([quad_hardy.R1, quad_hardy.R2])
    closure = (4.0 * k * k / Z) * np.einsum(
        "in,jn,ln,mn,n->lmij", Rh, Rh, Rh, Rh, quad_hardy.weights, optimize=True
    )

    if np.any(stiffness[0] != 0.0) or np.any(drag[:, :, 0, :] != 0.0):
        raise AssemblyError("constant mode leaks into the stiffness or drag rows")

    eigvals, eigvecs = linalg.eigh(stiffness[1:, 1:])
    if eigvals[0] <= 0.0:
        raise AssemblyError(f"stiffness not positive on zero-mass modes: lambda_min={eigvals[0]:.3e}")

    log.info(
        "[assembly] operators k=%s P=%d Q=%d lambda_min=%.6g",
        k, basis.P, basis.Q, eigvals[0],
    )
    return BallOperators(
        k=k,
        P=basis.P,
        Z=Z,
        stiffness=stiffness,
        drag=drag,
        drag_source=drag_source,
        stress=stress,
        moments=moments,
        closure=closure,
        relax_eigvals=eigvals,
        relax_eigvecs=eigvecs,
        basis=basis,
        quad=quad,
        quad_stress=quad_stress,
        quad_hardy=quad_hardy,
    )


# ---------------------------------------------------------------------------
# Spectral gap and functional inequalities
# ---------------------------------------------------------------------------


class SpectralGap(NamedTuple):
    lambda_min: float
    rayleigh_r1: float


def spectral_gap(ops: BallOperators) -> SpectralGap:
    """Smallest stiffness eigenvalue on zero-mass modes, plus the Rayleigh quotient of R1."""
    lam = float(ops.relax_eigvals[0])
    if lam <= 0.0:
        raise AssemblyError(f"nonpositive spectral gap {lam}")
    c = ops.basis.project(lambda R1, R2: R1, ops.quad)
    rayleigh = float(c @ ops.stiffness @ c / (c @ c))
    return SpectralGap(lambda_min=lam, rayleigh_r1=rayleigh)


class InequalityRatios(NamedTuple):
    poincare: float
    hardy: float
    tau_hardy: float


def inequality_ratios(coeffs, ops: BallOperators) -> InequalityRatios:
    """Left side over |psi|^2_{H1dot} for the Poincare, boundary-Hardy and stress-Hardy bounds."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (ops.Q,):
        raise DomainError(f"expected {ops.Q} coefficients, got shape {c.shape}")
    size = float(np.linalg.norm(c))
    if size == 0.0:
        raise DegenerateInputError("inequality ratios need a nonzero configuration")
    if abs(c[0]) > 1e-12 * size:
        raise DomainError("inequality ratios need zero R-mass (coefficient 0 must vanish)")

    h1 = float(c @ ops.stiffness @ c)
    if h1 <= 0.0:
        raise DegenerateInputError("zero H1dot seminorm for a nonzero zero-mass input")

    poincare = float(c @ c) / h1

    hq = ops.quad_hardy
    phi = c @ ops.basis.evaluate(hq.R1, hq.R2)
    # psi^2 / (psi_inf (1-r)^2) = (1+r)^2 (1-r^2)^(k-2) phi^2 / Z
    hardy = hq.integrate((1.0 + hq.r) ** 2 * phi**2) / ops.Z / h1

    sq = ops.quad_stress
    phi_s = c @ ops.basis.evaluate(sq.R1, sq.R2)
    # |psi| / (1-r) = (1+r) (1-r^2)^(k-1) |phi| / Z
    tau = (sq.integrate((1.0 + sq.r) * np.abs(phi_s)) / ops.Z) ** 2 / h1

    return InequalityRatios(poincare=poincare, hardy=float(hardy), tau_hardy=float(tau))


def inequality_bounds(ops: BallOperators) -> InequalityRatios:
    """Suprema of the three ratios over zero-mass coefficient vectors."""
    lam = float(ops.relax_eigvals[0])
    hq = ops.quad_hardy
    V = ops.basis.evaluate(hq.R1, hq.R2)[1:]
    weight = (1.0 + hq.r) ** 2 * hq.weights / ops.Z
    H = (V * weight) @ V.T
    hardy_max = float(linalg.eigh(H, ops.stiffness[1:, 1:], eigvals_only=True)[-1])
    Ck = hq.integrate((1.0 + hq.r) ** 2) / ops.Z
    return InequalityRatios(poincare=1.0 / lam, hardy=hardy_max, tau_hardy=Ck / lam)


def closed_form_constants(k: float) -> Dict[str, float]:
    """Beta-function values: Z = pi/(k+1), c2 = k/(k-1), c1 = 3 c2, C = 1/(k+2)."""
    c2 = k / (k - 1.0)
    return {
        "Z": math.pi / (k + 1.0),
        "c1": 3.0 * c2,
        "c2": c2,
        "Ccoef": 1.0 / (k + 2.0),
        "rayleigh_r1": 2.0 * (k + 2.0),
    }
