"""Forced, damped 2D Navier-Stokes on the beta-plane, vorticity-streamfunction form.

    d(omega)/dt + N(omega, psi) = lap(omega)/Re - f - r*omega + beta*psi_x (+ Pi)
    lap(psi) = -omega

Time integration is fourth-order Runge-Kutta in integrating-factor (Lawson)
form: viscosity and drag are integrated exactly, everything else explicitly.
"""

from __future__ import annotations

import functools
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from . import __version__
from .spectral import (
    SpectralField,
    SpectralGrid,
    _jacobian,
    _mean_product,
    from_physical,
    inv,
    make_grid,
    to_physical,
)

log = logging.getLogger(__name__)

CFL_MAX = 0.5
CFL_CHECK_EVERY = 100

# closure: either a fixed Pi field, or a callable mapping vorticity coefficients
# to Pi coefficients (re-evaluated at every Runge-Kutta stage)
Closure = Union[SpectralField, Callable[[np.ndarray], np.ndarray], None]


class BlowUpError(FloatingPointError):
    """Non-finite values appeared in the vorticity."""

    def __init__(self, step_count: int, message: str = ""):
        self.step_count = step_count
        super().__init__(message or f"non-finite vorticity at step {step_count}")


class CFLError(ValueError):
    def __init__(self, cfl: float, advisory_dt: float):
        self.cfl = cfl
        self.advisory_dt = advisory_dt
        super().__init__(
            f"CFL number {cfl:.3f} exceeds {CFL_MAX}; use dt <= {advisory_dt:.4g}"
        )


@dataclass(frozen=True)
class PhysicsParams:
    re: float
    beta: float = 0.0
    drag: float = 0.1
    kappa_f: int = 4
    forced: bool = True

    def __post_init__(self):
        if not self.re > 0:
            raise ValueError(f"Reynolds number must be positive, got {self.re}")
        if self.drag < 0:
            raise ValueError(f"drag must be non-negative, got {self.drag}")
        if int(self.kappa_f) != self.kappa_f or self.kappa_f < 1:
            raise ValueError(f"forcing wavenumber must be an integer >= 1, got {self.kappa_f}")


@dataclass
class SimState:
    omega: SpectralField
    t: float = 0.0
    step_count: int = 0

    def copy(self) -> "SimState":
        return SimState(self.omega.copy(), self.t, self.step_count)


def forcing_field(grid: SpectralGrid, kappa_f: int) -> SpectralField:
    """``kappa_f * (cos(kappa_f x) + cos(kappa_f y))``."""
    if kappa_f < 1 or kappa_f > grid.k_dealias:
        raise ValueError(
            f"forcing wavenumber {kappa_f} outside the resolved band 1..{grid.k_dealias}"
        )
    c = np.zeros(grid.spectral_shape, dtype=complex)
    c[kappa_f, 0] = kappa_f / 2
    c[grid.n - kappa_f, 0] = kappa_f / 2
    c[0, kappa_f] = kappa_f / 2
    return SpectralField(grid, c)


def _forcing(grid: SpectralGrid, params: PhysicsParams) -> np.ndarray:
    if not params.forced:
        return np.zeros(grid.spectral_shape, dtype=complex)
    return forcing_field(grid, params.kappa_f).coeffs


def linear_rate(grid: SpectralGrid, params: PhysicsParams) -> np.ndarray:
    """Per-mode growth rate of the terms integrated exactly (viscosity + drag)."""
    return -grid.k2 / params.re - params.drag


def _explicit(grid, params, w, forcing, closure):
    """Terms advanced explicitly: advection, beta, forcing, closure."""
    psi = w * grid.inv_k2
    out = -_jacobian(grid, w, psi) - forcing + params.beta * grid.ikx * psi
    if closure is not None:
        out = out + (closure(w) if callable(closure) else closure.coeffs)
    return out


def rhs(state: SimState, params: PhysicsParams, closure_pi: Closure = None) -> SpectralField:
    """Full time derivative of the vorticity, dealiased."""
    grid = state.omega.grid
    if isinstance(closure_pi, SpectralField) and closure_pi.grid != grid:
        raise ValueError(f"closure grid {closure_pi.grid} does not match state grid {grid}")
    w = state.omega.coeffs
    forcing = _forcing(grid, params)
    out = _explicit(grid, params, w, forcing, closure_pi) + linear_rate(grid, params) * w
    return SpectralField(grid, out * grid.dealias_mask)


def max_speed(grid: SpectralGrid, w: np.ndarray) -> np.ndarray:
    psi = w * grid.inv_k2
    uv = inv(np.stack([grid.iky * psi, -grid.ikx * psi]), grid.n)
    return np.sqrt(np.max(uv[0] ** 2 + uv[1] ** 2, axis=(-2, -1)))


def cfl_number(grid: SpectralGrid, w: np.ndarray, dt: float) -> np.ndarray:
    return max_speed(grid, w) * dt / grid.dx


class Integrator:
    """Integrating-factor RK4 for one (grid, params, dt) combination.

    Works on raw coefficient arrays with arbitrary leading batch axes, so
    several independent runs can be advanced together.
    """

    def __init__(self, grid: SpectralGrid, params: PhysicsParams, dt: float):
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        self.grid = grid
        self.params = params
        self.dt = float(dt)
        lin = linear_rate(grid, params)
        self.e1 = np.exp(lin * dt) * grid.dealias_mask
        self.e2 = np.exp(lin * dt / 2) * grid.dealias_mask
        self.forcing = _forcing(grid, params)

    def cfl(self, w: np.ndarray) -> np.ndarray:
        return cfl_number(self.grid, w, self.dt)

    def advisory_dt(self, w: np.ndarray) -> float:
        return CFL_MAX * self.grid.dx / float(np.max(max_speed(self.grid, w)))

    def advance(self, w: np.ndarray, closure: Closure = None) -> np.ndarray:
        g, p, f, dt = self.grid, self.params, self.forcing, self.dt
        e1, e2 = self.e1, self.e2
        k1 = _explicit(g, p, w, f, closure)
        k2 = _explicit(g, p, e2 * (w + 0.5 * dt * k1), f, closure)
        k3 = _explicit(g, p, e2 * w + 0.5 * dt * k2, f, closure)
        k4 = _explicit(g, p, e1 * w + dt * e2 * k3, f, closure)
        out = e1 * w + (dt / 6.0) * (e1 * k1 + 2.0 * e2 * (k2 + k3) + k4)
        out[..., 0, 0] = 0.0
        return out


@functools.lru_cache(maxsize=32)
def _integrator(n: int, params: PhysicsParams, dt: float) -> Integrator:
    return Integrator(make_grid(n), params, dt)


def check_cfl(integ: Integrator, w: np.ndarray) -> None:
    cfl = float(np.max(integ.cfl(w)))
    if cfl > CFL_MAX:
        raise CFLError(cfl, integ.advisory_dt(w))


def step(state: SimState, params: PhysicsParams, dt: float, closure_pi: Closure = None) -> SimState:
    """Advance one time step. CFL is checked every ``CFL_CHECK_EVERY`` steps."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if isinstance(closure_pi, SpectralField) and closure_pi.grid != state.omega.grid:
        raise ValueError("closure grid does not match state grid")
    integ = _integrator(state.omega.grid.n, params, float(dt))
    w = state.omega.coeffs
    if state.step_count % CFL_CHECK_EVERY == 0:
        check_cfl(integ, w)
    new = integ.advance(w, closure_pi)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(state.step_count + 1)
    return SimState(SpectralField(state.omega.grid, new), state.t + dt, state.step_count + 1)


def energy(omega: SpectralField) -> np.ndarray:
    """Kinetic energy ``<|grad psi|^2>/2``."""
    g = omega.grid
    return 0.5 * _mean_product(g, omega.coeffs * np.sqrt(g.inv_k2), omega.coeffs * np.sqrt(g.inv_k2))


def enstrophy(omega: SpectralField) -> np.ndarray:
    """``<omega^2>/2``."""
    return 0.5 * _mean_product(omega.grid, omega.coeffs, omega.coeffs)


def random_vorticity(grid: SpectralGrid, k_peak: float, seed: int) -> SpectralField:
    """Random-phase vorticity with an isotropic spectrum peaked at ``k_peak``.

    Energy spectrum shape ``E(k) ~ k^4 exp(-2 (k/k_peak)^2)``; normalized to unit
    kinetic energy, zero mean, dealiased.
    """
    rng = np.random.default_rng(seed)
    k = np.sqrt(grid.k2)
    # per-mode enstrophy ~ k^2 E(k) / k  (2*pi*k modes per shell)
    amp = np.sqrt(k * (k / k_peak) ** 4 * np.exp(-2.0 * (k / k_peak) ** 2))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=grid.spectral_shape)
    c = amp * np.exp(1j * phase) * grid.dealias_mask
    c[0, 0] = 0.0
    # round trip through physical space enforces conjugate symmetry
    w = from_physical(grid, to_physical(SpectralField(grid, c)))
    w.coeffs *= grid.dealias_mask
    w.coeffs[..., 0, 0] = 0.0
    return SpectralField(grid, w.coeffs / np.sqrt(energy(w)))


# --------------------------------------------------------------------------
# snapshot archive

ARCHIVE_MAGIC = b"MSGSARC1"
ARCHIVE_LAYOUT = (
    "after the header: per snapshot, float64 t, int64 step, then complex128 "
    "half-spectrum vorticity of shape (n, n//2+1), C order, rfft2 with norm='forward' "
    "(x on axis 0, y on axis 1); all little-endian"
)


@dataclass
class SnapshotArchive:
    n: int
    params: PhysicsParams
    dt: float
    seed: Optional[int] = None
    times: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    coeffs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def append(self, state: SimState) -> None:
        if state.omega.grid.n != self.n:
            raise ValueError("snapshot grid does not match archive")
        self.times.append(float(state.t))
        self.steps.append(int(state.step_count))
        self.coeffs.append(np.array(state.omega.coeffs, dtype=np.complex128))

    def field(self, i: int) -> SpectralField:
        return SpectralField(make_grid(self.n), self.coeffs[i].copy())

    def subset(self, indices) -> "SnapshotArchive":
        indices = list(indices)
        return SnapshotArchive(
            self.n, self.params, self.dt, self.seed,
            [self.times[i] for i in indices],
            [self.steps[i] for i in indices],
            [self.coeffs[i] for i in indices],
            dict(self.extra),
        )

    def header(self) -> dict:
        return {
            "format": "marlsgs-snapshot-archive",
            "format_version": 1,
            "code_version": __version__,
            "n": self.n,
            "params": asdict(self.params),
            "dt": self.dt,
            "seed": self.seed,
            "n_snapshots": len(self),
            "layout": ARCHIVE_LAYOUT,
            "extra": self.extra,
        }


def write_archive(path, archive: SnapshotArchive) -> None:
    header = json.dumps(archive.header(), sort_keys=True).encode()
    shape = make_grid(archive.n).spectral_shape
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for t, s, c in zip(archive.times, archive.steps, archive.coeffs):
            if c.shape != shape:
                raise ValueError(f"snapshot shape {c.shape} != {shape}")
            fh.write(struct.pack("<dq", t, s))
            fh.write(np.ascontiguousarray(c, dtype="<c16").tobytes())


def read_archive(path) -> SnapshotArchive:
    data = Path(path).read_bytes()
    if data[:8] != ARCHIVE_MAGIC:
        raise ValueError(f"{path}: not a snapshot archive")
    (hlen,) = struct.unpack_from("<Q", data, 8)
    try:
        header = json.loads(data[16:16 + hlen])
        n = int(header["n"])
        count = int(header["n_snapshots"])
    except (ValueError, KeyError) as exc:
        raise ValueError(f"{path}: corrupt archive header") from exc
    shape = make_grid(n).spectral_shape
    nbytes = shape[0] * shape[1] * 16
    pos = 16 + hlen
    if len(data) != pos + count * (16 + nbytes):
        raise ValueError(f"{path}: archive body truncated or oversized")
    arc = SnapshotArchive(n, PhysicsParams(**header["params"]), header["dt"], header["seed"],
                          extra=header.get("extra", {}))
    for _ in range(count):
        t, s = struct.unpack_from("<dq", data, pos)
        pos += 16
        c = np.frombuffer(data, dtype="<c16", count=shape[0] * shape[1], offset=pos)
        pos += nbytes
        arc.times.append(t)
        arc.steps.append(s)
        arc.coeffs.append(c.reshape(shape).astype(np.complex128))
    return arc


def run(
    state: SimState,
    params: PhysicsParams,
    dt: float,
    n_steps: int,
    snapshot_every: int,
    closure_pi: Closure = None,
    include_initial: bool = False,
    seed: Optional[int] = None,
    archive: Optional[SnapshotArchive] = None,
) -> tuple[SimState, SnapshotArchive]:
    """Advance ``n_steps`` steps, recording a snapshot every ``snapshot_every``."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if snapshot_every < 1:
        raise ValueError(f"snapshot_every must be >= 1, got {snapshot_every}")
    if archive is None:
        archive = SnapshotArchive(state.omega.grid.n, params, float(dt), seed)
    if include_initial:
        archive.append(state)
    for i in range(1, n_steps + 1):
        state = step(state, params, dt, closure_pi)
        if i % snapshot_every == 0:
            archive.append(state)
    return state, archive
