"""Fourier-space machinery for doubly periodic 2D fields on [0, 2pi)^2.

Fields are stored as half-spectrum coefficients from ``rfft2`` with
``norm="forward"``, so a coefficient is the physical amplitude of its mode
(``sin(3x)`` has coefficient ``-i/2`` at ``kx=3, ky=0``). Physical arrays are
indexed ``f[i, j]`` with ``x = i*dx`` on axis 0 and ``y = j*dx`` on axis 1.
Every operation broadcasts over leading batch axes of ``coeffs``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Wavenumber tables for an ``n x n`` periodic grid of side ``2pi``."""

    n: int
    length: float
    kx: np.ndarray  # (n, 1) integer, Nyquist stored as +n/2
    ky: np.ndarray  # (1, n//2 + 1) integer
    dealias_mask: np.ndarray
    k2: np.ndarray
    inv_k2: np.ndarray
    ikx: np.ndarray  # derivative multipliers, Nyquist zeroed
    iky: np.ndarray
    weights: np.ndarray  # half-spectrum multiplicity (1 or 2) per column
    shell: np.ndarray  # nearest-integer shell index of |k|

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @property
    def physical_shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def k_dealias(self) -> int:
        """Largest integer wavenumber kept by the two-thirds rule."""
        return self.n // 3

    @property
    def k_shell_max(self) -> int:
        return int(self.shell.max())

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, indexing="ij")

    def __eq__(self, other):
        return isinstance(other, SpectralGrid) and other.n == self.n

    def __hash__(self):
        return hash(("SpectralGrid", self.n))

    def __repr__(self):
        return f"SpectralGrid(n={self.n})"


@functools.lru_cache(maxsize=None)
def make_grid(n: int) -> SpectralGrid:
    """Build (and cache) the spectral grid for ``n`` points per direction."""
    if int(n) != n or n < 4 or n % 2:
        raise ValueError(f"grid size must be an even integer >= 4, got {n!r}")
    n = int(n)
    kx = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)
    kx[n // 2] = n // 2
    ky = np.arange(n // 2 + 1, dtype=np.int64)
    kx = kx[:, None]
    ky = ky[None, :]

    k2 = (kx**2 + ky**2).astype(float)
    inv_k2 = np.zeros_like(k2)
    inv_k2[k2 > 0] = 1.0 / k2[k2 > 0]

    kxd = kx.astype(float)
    kyd = ky.astype(float)
    kxd[n // 2] = 0.0
    kyd[:, n // 2] = 0.0

    weights = np.full((1, n // 2 + 1), 2.0)
    weights[0, 0] = 1.0
    weights[0, -1] = 1.0

    mask = (np.abs(kx) <= n / 3) & (np.abs(ky) <= n / 3)
    shell = np.floor(np.sqrt(k2) + 0.5).astype(np.int64)

    arrays = dict(
        kx=kx, ky=ky, dealias_mask=mask, k2=k2, inv_k2=inv_k2,
        ikx=1j * kxd, iky=1j * kyd, weights=weights, shell=shell,
    )
    for a in arrays.values():
        a.setflags(write=False)
    return SpectralGrid(n=n, length=TWO_PI, **arrays)


@dataclass(eq=False)
class SpectralField:
    """Half-spectrum coefficients of a real field (or a batch of them)."""

    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape[-2:] != self.grid.spectral_shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match "
                f"grid {self.grid.spectral_shape}"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[..., 0, 0].real

    @classmethod
    def zeros(cls, grid: SpectralGrid, batch: tuple[int, ...] = ()) -> "SpectralField":
        return cls(grid, np.zeros(batch + grid.spectral_shape, dtype=complex))


def _check_same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def fwd(arr: np.ndarray) -> np.ndarray:
    return sfft.rfft2(arr, norm="forward")


def inv(coeffs: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfft2(coeffs, s=(n, n), norm="forward")


def to_physical(f: SpectralField) -> np.ndarray:
    """Real physical values on the ``n x n`` grid."""
    return inv(f.coeffs, f.grid.n)


def from_physical(grid: SpectralGrid, values: np.ndarray) -> SpectralField:
    values = np.asarray(values, dtype=float)
    if values.shape[-2:] != grid.physical_shape:
        raise ValueError(
            f"physical shape {values.shape} does not match grid {grid.physical_shape}"
        )
    return SpectralField(grid, fwd(values))


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


def mean_product(f: SpectralField, g: SpectralField) -> np.ndarray:
    """Domain mean of ``f*g`` evaluated from coefficients (Parseval)."""
    _check_same_grid(f, g)
    return _mean_product(f.grid, f.coeffs, g.coeffs)


def _mean_product(grid: SpectralGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(grid.weights * (a * b.conj()).real, axis=(-2, -1))


def poisson_solve(omega: SpectralField, tol: float = 1e-10) -> SpectralField:
    """Streamfunction from vorticity, solving ``lap(psi) = -omega``."""
    mean = np.abs(omega.coeffs[..., 0, 0])
    if np.any(mean > tol):
        raise ValueError(
            f"vorticity has nonzero mean {float(np.max(mean)):.3e}; "
            "the periodic Poisson problem is ill-posed"
        )
    return SpectralField(omega.grid, omega.coeffs * omega.grid.inv_k2)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.k2 * f.coeffs)


def gradient(f: SpectralField) -> tuple[SpectralField, SpectralField]:
    g = f.grid
    return SpectralField(g, g.ikx * f.coeffs), SpectralField(g, g.iky * f.coeffs)


def jacobian(omega: SpectralField, psi: SpectralField) -> SpectralField:
    """Dealiased advection term ``psi_y*omega_x - psi_x*omega_y``."""
    _check_same_grid(omega, psi)
    g = omega.grid
    return SpectralField(g, _jacobian(g, omega.coeffs, psi.coeffs))


def _jacobian(grid: SpectralGrid, w: np.ndarray, p: np.ndarray) -> np.ndarray:
    d = inv(np.stack([grid.ikx * w, grid.iky * w, grid.ikx * p, grid.iky * p]), grid.n)
    out = fwd(d[3] * d[0] - d[2] * d[1]) * grid.dealias_mask
    out[..., 0, 0] = 0.0
    return out


def cutoff_mask(grid: SpectralGrid, n_coarse: int) -> np.ndarray:
    """Modes kept by a sharp filter onto an ``n_coarse`` grid."""
    half = n_coarse // 2
    return (np.abs(grid.kx) < half) & (np.abs(grid.ky) < half)


def sharp_filter(f: SpectralField, n_coarse: int) -> SpectralField:
    """Sharp spectral cutoff at ``|kx|, |ky| < n_coarse/2``, re-embedded on the coarse grid."""
    n = f.grid.n
    if n_coarse > n:
        raise ValueError(f"coarse grid {n_coarse} is finer than the field grid {n}")
    coarse = make_grid(n_coarse)
    half = n_coarse // 2
    out = np.zeros(f.coeffs.shape[:-2] + coarse.spectral_shape, dtype=complex)
    out[..., :half, :half] = f.coeffs[..., :half, :half]
    if half > 1:
        out[..., -(half - 1):, :half] = f.coeffs[..., n - (half - 1):, :half]
    return SpectralField(coarse, out)
