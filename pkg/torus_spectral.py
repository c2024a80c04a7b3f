# torus_spectral.py
#
# Pseudo-spectral calculus on the periodic box [0, L_box)^2.
# Spectral arrays use the real-to-complex layout of scipy.fft.rfft2: the last
# two axes are (x1 wavenumber, x2 wavenumber), shape (M, M//2 + 1).
# Fields are kept dealiased (2/3 rule), so every pairing below is exact.

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import fft as sfft

from errors import DomainError

log = logging.getLogger(__name__)


def fft_workers() -> int:
    try:
        return max(1, int(os.getenv("FENE_THREADS", "1")))
    except ValueError:
        return 1


class TorusGrid:
    """Wavenumber lattice, dealias mask and quadrature weights for an M x M box."""

    def __init__(self, L_box: float, M: int):
        if L_box <= 0:
            raise DomainError(f"L_box must be positive (got {L_box})")
        if M < 4 or M % 2:
            raise DomainError(f"M must be an even integer >= 4 (got {M})")

        self.L_box = float(L_box)
        self.M = int(M)
        self.Mh = M // 2 + 1
        self.dx = self.L_box / M
        self.dk = 2.0 * np.pi / self.L_box

        n1 = np.fft.fftfreq(M, 1.0 / M)[:, None] * np.ones((1, self.Mh))
        n2 = np.fft.rfftfreq(M, 1.0 / M)[None, :] * np.ones((M, 1))
        self.n = np.stack([n1, n2])
        self.k = self.dk * self.n
        self.k2 = self.k[0] ** 2 + self.k[1] ** 2

        cut = M // 3
        self.mask = (np.abs(n1) <= cut) & (np.abs(n2) <= cut)

        # odd derivatives vanish on the Nyquist row and column
        self.ik = 1j * self.k
        self.ik[0, M // 2, :] = 0.0
        self.ik[1, :, -1] = 0.0

        # each interior rfft column stands for a +/- pair
        self.pair_weight = np.ones((M, self.Mh))
        self.pair_weight[:, 1 : M // 2] = 2.0
        self.volume_factor = self.L_box**2 / float(M) ** 4

    def __repr__(self) -> str:
        return f"TorusGrid(L_box={self.L_box!r}, M={self.M})"

    # -- transforms ---------------------------------------------------------

    def forward(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfft2(f, axes=(-2, -1), workers=fft_workers())

    def inverse(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfft2(fh, s=(self.M, self.M), axes=(-2, -1), workers=fft_workers())

    def dealias(self, fh: np.ndarray) -> np.ndarray:
        return fh * self.mask

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.M) * self.dx
        return np.meshgrid(x, x, indexing="ij")

    # -- pairings -----------------------------------------------------------

    def inner(self, fh: np.ndarray, gh: np.ndarray) -> float:
        """Real L2(T^2) pairing of two spectral arrays, summed over leading axes."""
        prod = np.real(fh * np.conj(gh)) * self.pair_weight
        return float(self.volume_factor * np.sum(prod))

    def norm(self, fh: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(fh, fh), 0.0)))

    def broadcast(self, a: np.ndarray, ndim: int) -> np.ndarray:
        """Reshape a (M, Mh) lattice array to broadcast against an ndim spectral array."""
        return a.reshape((1,) * (ndim - 2) + a.shape)


@lru_cache(maxsize=16)
def grid_for(L_box: float, M: int) -> TorusGrid:
    return TorusGrid(L_box, M)


def sobolev_weight(grid: TorusGrid, s: int) -> np.ndarray:
    """Multiplier sum_{j<=s} |xi|^(2j) of the H^s norm."""
    if s < 0:
        raise DomainError(f"Sobolev index must be nonnegative (got {s})")
    out = np.ones_like(grid.k2)
    term = np.ones_like(grid.k2)
    for _ in range(s):
        term = term * grid.k2
        out = out + term
    return out


def transverse_unit(grid: TorusGrid) -> np.ndarray:
    """e(xi) = (-xi2, xi1) / |xi|, zero at xi = 0."""
    mod = np.sqrt(grid.k2)
    safe = np.where(mod > 0.0, mod, 1.0)
    e = np.stack([-grid.k[1], grid.k[0]]) / safe
    e[:, mod == 0.0] = 0.0
    return e


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: TorusGrid
    hat: np.ndarray  # (2, M, Mh) complex
    solenoidal: bool = False

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "VectorField":
        return cls(grid, np.zeros((2, grid.M, grid.Mh), dtype=complex), solenoidal=True)

    @classmethod
    def from_physical(cls, grid: TorusGrid, values: np.ndarray) -> "VectorField":
        values = np.asarray(values, dtype=float)
        if values.shape != (2, grid.M, grid.M):
            raise DomainError(f"vector field must have shape (2, {grid.M}, {grid.M})")
        return cls(grid, grid.dealias(grid.forward(values)))

    @property
    def physical(self) -> np.ndarray:
        return self.grid.inverse(self.hat)

    def divergence_hat(self) -> np.ndarray:
        return self.grid.ik[0] * self.hat[0] + self.grid.ik[1] * self.hat[1]

    def max_divergence(self) -> float:
        """max |xi . u_hat| over the lattice."""
        return float(np.max(np.abs(self.grid.k[0] * self.hat[0] + self.grid.k[1] * self.hat[1])))


def leray_project(field: VectorField) -> VectorField:
    """u_hat - xi (xi . u_hat) / |xi|^2; the mean mode passes through."""
    grid = field.grid
    k2 = np.where(grid.k2 > 0.0, grid.k2, 1.0)
    kdotu = grid.k[0] * field.hat[0] + grid.k[1] * field.hat[1]
    hat = field.hat - grid.k * (kdotu / k2)
    return VectorField(grid, hat, solenoidal=True)


# ---------------------------------------------------------------------------
# Differential operators on spectral arrays (last two axes spatial)
# ---------------------------------------------------------------------------


def spectral_derivative(fh: np.ndarray, grid: TorusGrid, direction: int, order: int = 1) -> np.ndarray:
    if direction not in (0, 1):
        raise DomainError(f"direction must be 0 or 1 (got {direction})")
    if order == 1:
        return grid.broadcast(grid.ik[direction], fh.ndim) * fh
    if order == 2:
        return -grid.broadcast(grid.k[direction] ** 2, fh.ndim) * fh
    raise DomainError(f"derivative order must be 1 or 2 (got {order})")


def gradient(fh: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Spectral gradient; the new axis (direction) comes first."""
    return np.stack([spectral_derivative(fh, grid, d) for d in (0, 1)])


def laplacian(fh: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return -grid.broadcast(grid.k2, fh.ndim) * fh


def advect(u: VectorField, fh: np.ndarray) -> np.ndarray:
    """Dealiased spectrum of u . grad f for any stack of scalar fields f."""
    grid = u.grid
    up = u.physical
    grads = grid.inverse(gradient(fh, grid))
    prod = up[0] * grads[0] + up[1] * grads[1]
    return grid.dealias(grid.forward(prod))


# ---------------------------------------------------------------------------
# Random band-limited data
# ---------------------------------------------------------------------------


def _band(grid: TorusGrid, xi_cutoff: Optional[float]) -> np.ndarray:
    band = grid.mask & (grid.k2 > 0.0)
    if xi_cutoff is not None:
        band = band & (grid.k2 <= xi_cutoff**2)
    if not np.any(band):
        raise DomainError(f"no lattice modes with 0 < |xi| <= {xi_cutoff} (spacing {grid.dk:.4g})")
    return band


def random_scalar_fields(
    grid: TorusGrid, rng: np.random.Generator, count: int, xi_cutoff: Optional[float] = None
) -> np.ndarray:
    """`count` real mean-free fields with unit-variance Gaussian coefficients in the band."""
    band = _band(grid, xi_cutoff)
    shape = (count, grid.M, grid.Mh)
    fh = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * band
    # round trip enforces the Hermitian symmetry of the rfft layout
    return grid.inverse(fh)


def random_solenoidal(
    grid: TorusGrid, rng: np.random.Generator, xi_cutoff: Optional[float] = None
) -> VectorField:
    stream = random_scalar_fields(grid, rng, 1, xi_cutoff)[0]
    sh = grid.forward(stream)
    # u = (-d2 psi, d1 psi)
    hat = np.stack([-grid.ik[1] * sh, grid.ik[0] * sh])
    return leray_project(VectorField(grid, grid.dealias(hat)))


# ---------------------------------------------------------------------------
# Shell spectrum
# ---------------------------------------------------------------------------


class ShellSpectrum(NamedTuple):
    xi: np.ndarray      # shell wavenumber dk * s
    energy: np.ndarray  # mean |f_hat|^2 per lattice mode in the shell, 0 for empty shells
    modes: np.ndarray   # lattice modes per shell, both members of a conjugate pair counted


def shell_spectrum(fh: np.ndarray, grid: TorusGrid) -> ShellSpectrum:
    """Shell-averaged energy on integer shells |n| ~ s, summed over leading axes.

    Covers shells 0..ceil(sqrt(2) (M // 3)); energy * modes sums to the total energy.
    """
    nmod = np.sqrt(grid.n[0] ** 2 + grid.n[1] ** 2)
    shells = np.rint(nmod).astype(int).ravel()
    density = np.abs(fh) ** 2 * grid.pair_weight * grid.volume_factor
    density = density.reshape((-1, grid.M, grid.Mh)).sum(axis=0) * grid.mask
    n_shells = int(np.ceil(np.sqrt(2.0) * (grid.M // 3))) + 1
    total = np.bincount(shells, weights=density.ravel(), minlength=n_shells)[:n_shells]
    modes = np.bincount(shells, weights=(grid.pair_weight * grid.mask).ravel(), minlength=n_shells)[:n_shells]
    energy = np.divide(total, modes, out=np.zeros(n_shells), where=modes > 0)
    return ShellSpectrum(grid.dk * np.arange(n_shells), energy, modes.astype(int))
