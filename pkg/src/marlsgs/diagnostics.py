"""Shell-binned spectra, vorticity PDFs, and the log-spectrum error used as reward."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .spectral import SpectralField

SPECTRUM_FLOOR = 1e-30


@dataclass
class Spectrum:
    """Spectral density per integer shell ``k = 1 .. k_max``."""

    k: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.k.shape != self.values.shape[-1:]:
            raise ValueError("wavenumber and value arrays disagree in length")

    def band(self, k_max: int) -> "Spectrum":
        keep = self.k <= k_max
        return Spectrum(self.k[keep], self.values[..., keep])

    @property
    def total(self) -> np.ndarray:
        return self.values.sum(axis=-1)


def _shell_sum(omega: SpectralField, density: np.ndarray) -> Spectrum:
    g = omega.grid
    k_max = g.k_shell_max
    flat_shell = np.broadcast_to(g.shell, g.spectral_shape).ravel()
    d = density.reshape(density.shape[:-2] + (-1,))
    if d.ndim == 1:
        vals = np.bincount(flat_shell, weights=d, minlength=k_max + 1)
    else:
        vals = np.stack([np.bincount(flat_shell, weights=row, minlength=k_max + 1)
                         for row in d.reshape(-1, d.shape[-1])]).reshape(d.shape[:-1] + (k_max + 1,))
    return Spectrum(np.arange(1, k_max + 1), vals[..., 1:])


def enstrophy_spectrum(omega: SpectralField) -> Spectrum:
    """Shell sums of ``|omega_k|^2 / 2``; totals to ``<omega^2>/2``."""
    g = omega.grid
    return _shell_sum(omega, 0.5 * g.weights * np.abs(omega.coeffs) ** 2)


def energy_spectrum(omega: SpectralField) -> Spectrum:
    """Shell sums of ``|omega_k|^2 / (2 |k|^2)``; totals to ``<u^2 + v^2>/2``."""
    g = omega.grid
    return _shell_sum(omega, 0.5 * g.weights * np.abs(omega.coeffs) ** 2 * g.inv_k2)


def spectrum_log_error(a: Spectrum, b: Spectrum, floor: float = SPECTRUM_FLOOR) -> float:
    """Squared L2 distance between log spectra over shared bins."""
    if a.k.shape != b.k.shape or np.any(a.k != b.k):
        raise ValueError("spectra have different shell binning")
    la = np.log(np.maximum(a.values, floor))
    lb = np.log(np.maximum(b.values, floor))
    return float(np.sum((la - lb) ** 2))


@dataclass
class PdfEstimate:
    bin_edges: np.ndarray
    density: np.ndarray
    n_samples: int
    sigma: float
    tail_fractions: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])


def tail_fraction(values: np.ndarray, threshold_sigmas: float, sigma: Optional[float] = None) -> float:
    """Fraction of samples with ``|omega| > threshold_sigmas * sigma``."""
    values = np.asarray(values, dtype=float).ravel()
    sigma = float(values.std()) if sigma is None else sigma
    if sigma == 0.0:
        return 0.0
    return float(np.mean(np.abs(values) > threshold_sigmas * sigma))


def vorticity_pdf(
    samples: Sequence[np.ndarray],
    n_bins: int = 101,
    range_sigmas: float = 6.0,
    thresholds: Sequence[float] = (3.0, 4.0),
) -> PdfEstimate:
    """Histogram density of pooled vorticity samples over ``+-range_sigmas * sigma``.

    The density is normalized over the samples that fall inside the range.
    A constant-zero input gives a unit-width range so the mass lands in the
    central bin.
    """
    if len(samples) == 0:
        raise ValueError("need at least one vorticity field")
    values = np.concatenate([np.asarray(s, dtype=float).ravel() for s in samples])
    if values.size == 0:
        raise ValueError("vorticity samples are empty")
    sigma = float(values.std())
    half = range_sigmas * (sigma if sigma > 0 else 1.0)
    edges = np.linspace(-half, half, n_bins + 1)
    density, _ = np.histogram(values, bins=edges, density=True)
    tails = {float(t): tail_fraction(values, t, sigma) for t in thresholds}
    return PdfEstimate(edges, density, int(values.size), sigma, tails)


def write_spectrum_csv(path, spectrum: Spectrum, metadata: Optional[dict] = None, name: str = "value") -> None:
    with open(path, "w") as fh:
        for key, val in sorted((metadata or {}).items()):
            fh.write(f"# {key}: {val}\n")
        fh.write(f"k,{name}\n")
        for k, v in zip(spectrum.k, spectrum.values):
            fh.write(f"{int(k)},{float(v)!r}\n")


def read_spectrum_csv(path) -> tuple[Spectrum, dict]:
    meta = {}
    ks, vals = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            elif line[0].isdigit():
                k, v = line.split(",")
                ks.append(int(k))
                vals.append(float(v))
    if not ks:
        raise ValueError(f"{path}: no spectrum rows")
    return Spectrum(np.array(ks), np.array(vals)), meta


def write_pdf_csv(path, pdf: PdfEstimate, metadata: Optional[dict] = None) -> None:
    meta = dict(metadata or {})
    meta.update(sigma=repr(pdf.sigma), n_samples=pdf.n_samples)
    for t, frac in pdf.tail_fractions.items():
        meta[f"tail_fraction_{t:g}sigma"] = repr(frac)
    with open(path, "w") as fh:
        for key, val in sorted(meta.items()):
            fh.write(f"# {key}: {val}\n")
        fh.write("omega,density\n")
        for c, d in zip(pdf.centers, pdf.density):
            fh.write(f"{float(c)!r},{float(d)!r}\n")
