"""Multi-agent LES environment: agents on a uniform sub-lattice set a local
eddy-viscosity coefficient; all share a reward for matching a target
enstrophy spectrum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .closures import KINDS, check_kind, closure_tendency, dynamic_tendency, strain_fields, ClosureField
from .diagnostics import Spectrum, enstrophy_spectrum, read_spectrum_csv, spectrum_log_error, write_spectrum_csv
from .solver import CFL_CHECK_EVERY, CFL_MAX, Integrator, PhysicsParams, SnapshotArchive, random_vorticity
from .spectral import SpectralField, SpectralGrid, fwd, inv, make_grid, sharp_filter

log = logging.getLogger(__name__)

N_INVARIANTS = 5
REWARD_CAP = 1e6


@dataclass(frozen=True)
class AgentLayout:
    """``m x m`` agents on a uniform sub-lattice of the LES grid."""

    m: int

    def check(self, n: int) -> None:
        if not 2 <= self.m <= n or n % self.m:
            raise ValueError(f"{self.m} agents per side do not form a sub-lattice of an {n}-point grid")

    @property
    def n_agents(self) -> int:
        return self.m * self.m

    def indices(self, n: int) -> np.ndarray:
        self.check(n)
        return np.arange(self.m) * (n // self.m)

    def interpolation_matrix(self, n: int) -> np.ndarray:
        """``(n, m)`` periodic linear interpolation weights along one axis."""
        self.check(n)
        s = n // self.m
        pos = np.arange(n) / s
        i0 = np.floor(pos).astype(int)
        frac = pos - i0
        w = np.zeros((n, self.m))
        rows = np.arange(n)
        w[rows, i0 % self.m] += 1.0 - frac
        w[rows, (i0 + 1) % self.m] += frac
        return w


@dataclass
class TargetSpectrum:
    values: np.ndarray
    n_snapshots: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.n_snapshots < 1:
            raise ValueError("target spectrum needs at least one snapshot")

    @property
    def spectrum(self) -> Spectrum:
        return Spectrum(np.arange(1, len(self.values) + 1), self.values)

    def write_csv(self, path, metadata: Optional[dict] = None) -> None:
        meta = {"n_snapshots": self.n_snapshots, "quantity": "enstrophy spectrum"}
        meta.update(metadata or {})
        write_spectrum_csv(path, self.spectrum, meta)

    @classmethod
    def read_csv(cls, path) -> "TargetSpectrum":
        spec, meta = read_spectrum_csv(path)
        if list(spec.k) != list(range(1, len(spec.k) + 1)):
            raise ValueError(f"{path}: target shells must run 1..K")
        return cls(spec.values, int(meta.get("n_snapshots", 1)))


def reward_band(n_les: int) -> int:
    return n_les // 3


def build_target(archive: SnapshotArchive, n_les: int) -> TargetSpectrum:
    """Time-averaged enstrophy spectrum of the snapshots, sharp-filtered to ``n_les``."""
    if len(archive) == 0:
        raise ValueError("snapshot archive is empty")
    if n_les > archive.n:
        raise ValueError(f"LES grid {n_les} is finer than the DNS grid {archive.n}")
    k_max = reward_band(n_les)
    specs = [
        enstrophy_spectrum(sharp_filter(archive.field(i), n_les)).band(k_max).values
        for i in range(len(archive))
    ]
    return TargetSpectrum(np.mean(specs, axis=0), len(archive))


def reward_increment(error: float, cap: float = REWARD_CAP) -> float:
    """Inverse squared log-spectrum error, capped at ``cap``."""
    if not np.isfinite(error):
        return 0.0
    if error <= 1.0 / cap:
        return cap
    return 1.0 / error


def local_invariants(omega_bar: SpectralField, layout: AgentLayout, mean_flow=(0.0, 0.0)) -> np.ndarray:
    """Five Galilean-invariant local features at each agent, shape ``(..., m*m, 5)``.

    Columns: ``|S|^2``, ``omega^2``, ``|grad omega|^2``, ``lap(omega)``,
    ``|grad |S||^2``.
    """
    g = omega_bar.grid
    idx = layout.indices(g.n)
    sf = strain_fields(omega_bar, mean_flow)
    w = omega_bar.coeffs
    om, lap = inv(np.stack([w, -g.k2 * w]), g.n)
    smh = fwd(sf.s_mag)
    dsx, dsy = inv(np.stack([g.ikx * smh, g.iky * smh]), g.n)
    feats = np.stack([
        sf.s_mag**2, om**2, sf.grad_omega_mag**2, lap, dsx**2 + dsy**2,
    ], axis=-1)
    sub = feats[..., idx[:, None], idx[None, :], :]
    return sub.reshape(sub.shape[:-3] + (layout.n_agents, N_INVARIANTS))


def actions_to_closure(actions, layout: AgentLayout, n_les: int, kind: str, c_max: float = 1.0) -> ClosureField:
    """Bilinear periodic interpolation of per-agent coefficients onto the LES grid."""
    check_kind(kind)
    a = np.asarray(actions, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("actions must be finite")
    if a.shape[-1] == layout.n_agents and a.shape[-2:] != (layout.m, layout.m):
        a = a.reshape(a.shape[:-1] + (layout.m, layout.m))
    if a.shape[-2:] != (layout.m, layout.m):
        raise ValueError(f"actions shape {a.shape} does not match {layout.m}x{layout.m} agents")
    a = np.clip(a, 0.0, c_max)
    w = layout.interpolation_matrix(n_les)
    c = np.einsum("im,...mn,jn->...ij", w, a, w)
    return ClosureField(np.maximum(c, 0.0), kind, make_grid(n_les).dx)


@dataclass
class EnvConfig:
    n_les: int = 32
    dt: float = 0.015
    steps_per_action: int = 10
    horizon: int = 500
    kind: str = "smagorinsky"
    agents_per_side: Optional[int] = None
    c_max: float = 1.0
    reward_cap: float = REWARD_CAP

    def __post_init__(self):
        check_kind(self.kind)
        if self.agents_per_side is None:
            self.agents_per_side = self.n_les // 2
        if self.steps_per_action < 1 or self.horizon < 1:
            raise ValueError("steps_per_action and horizon must be >= 1")

    @property
    def layout(self) -> AgentLayout:
        return AgentLayout(self.agents_per_side)


@dataclass
class Observation:
    local: np.ndarray  # (E, A, 5)
    global_: np.ndarray  # (E, K) log enstrophy spectrum


@dataclass
class EnvStep:
    observations: Observation
    reward: np.ndarray
    done: np.ndarray
    info: list = field(default_factory=list)


class LesEnv:
    """A batch of ``n_envs`` independent LES episodes advanced together.

    Closure is an action array ``(n_envs, m, m)`` of coefficients, or, for
    baseline runs, one of ``"none"``, ``"dynamic_smagorinsky"``,
    ``"dynamic_leith"``.
    """

    def __init__(
        self,
        params: PhysicsParams,
        config: EnvConfig,
        target: TargetSpectrum,
        init_archive: Optional[SnapshotArchive] = None,
        n_envs: int = 1,
        seed: int = 0,
    ):
        self.params = params
        self.config = config
        self.target = target
        self.grid: SpectralGrid = make_grid(config.n_les)
        self.layout = config.layout
        self.layout.check(config.n_les)
        self.k_max = reward_band(config.n_les)
        if len(target.values) != self.k_max:
            raise ValueError(
                f"target has {len(target.values)} shells, LES band needs {self.k_max}"
            )
        self.init_archive = init_archive
        self.n_envs = n_envs
        self.integ = Integrator(self.grid, params, config.dt)
        self._interp = self.layout.interpolation_matrix(config.n_les)
        self.reset(seed)

    # -- episode management -------------------------------------------------

    def _initial_field(self, rng: np.random.Generator) -> np.ndarray:
        if self.init_archive is not None and len(self.init_archive):
            i = int(rng.integers(len(self.init_archive)))
            f = sharp_filter(self.init_archive.field(i), self.config.n_les)
        else:
            f = random_vorticity(self.grid, self.params.kappa_f, int(rng.integers(2**31)))
        c = f.coeffs * self.grid.dealias_mask
        c[0, 0] = 0.0
        return c

    def reset(self, seed: int = 0) -> Observation:
        self._rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(self.n_envs)]
        self.w = np.stack([self._initial_field(r) for r in self._rngs])
        self.interval = np.zeros(self.n_envs, dtype=np.int64)
        self.steps = np.zeros(self.n_envs, dtype=np.int64)
        return self.observe()

    def reset_envs(self, which) -> None:
        for i in np.flatnonzero(which):
            self.w[i] = self._initial_field(self._rngs[i])
            self.interval[i] = 0
            self.steps[i] = 0

    @property
    def omega(self) -> SpectralField:
        return SpectralField(self.grid, self.w)

    # -- observations and rewards ------------------------------------------

    def spectrum(self) -> Spectrum:
        return enstrophy_spectrum(self.omega).band(self.k_max)

    def observe(self) -> Observation:
        spec = self.spectrum().values
        return Observation(
            local=local_invariants(self.omega, self.layout),
            global_=np.log(np.maximum(spec, 1e-30)),
        )

    def spectrum_errors(self) -> np.ndarray:
        spec = self.spectrum()
        tgt = self.target.spectrum
        return np.array([
            spectrum_log_error(Spectrum(spec.k, spec.values[i]), tgt) for i in range(self.n_envs)
        ])

    # -- dynamics -----------------------------------------------------------

    def closure_fn(self, closure) -> Optional[Callable[[np.ndarray], np.ndarray]]:
        g, kind = self.grid, self.config.kind
        if isinstance(closure, str):
            if closure == "none":
                return None
            if closure.startswith("dynamic_") and closure[len("dynamic_"):] in KINDS:
                dyn_kind = closure[len("dynamic_"):]
                return lambda w: dynamic_tendency(g, w, dyn_kind)
            raise ValueError(f"unknown closure {closure!r}")
        c = self.coefficient_field(closure)
        return lambda w: closure_tendency(g, w, c, kind)

    def coefficient_field(self, actions) -> np.ndarray:
        a = np.asarray(actions, dtype=float).reshape(self.n_envs, self.layout.m, self.layout.m)
        if not np.all(np.isfinite(a)):
            raise ValueError("actions must be finite")
        a = np.clip(a, 0.0, self.config.c_max)
        return np.einsum("im,emn,jn->eij", self._interp, a, self._interp)

    def advance(self, closure) -> np.ndarray:
        """Advance one action interval; returns a per-env failure mask."""
        fn = self.closure_fn(closure)
        failed = np.zeros(self.n_envs, dtype=bool)
        reasons = [None] * self.n_envs
        for _ in range(self.config.steps_per_action):
            check = self.steps % CFL_CHECK_EVERY == 0
            if np.any(check):
                cfl = self.integ.cfl(self.w)
                for i in np.flatnonzero(check & (cfl > CFL_MAX) & ~failed):
                    failed[i] = True
                    reasons[i] = f"CFL {cfl[i]:.3f} > {CFL_MAX}"
            with np.errstate(all="ignore"):
                self.w = self.integ.advance(self.w, fn)
            self.steps += 1
            bad = ~np.all(np.isfinite(self.w), axis=(-2, -1))
            for i in np.flatnonzero(bad & ~failed):
                failed[i] = True
                reasons[i] = f"non-finite vorticity at LES step {self.steps[i]}"
            if np.any(failed):
                self.w[failed] = 0.0
        self._fail_reasons = reasons
        return failed

    def step(self, actions) -> EnvStep:
        failed = self.advance(actions)
        self.interval += 1
        errors = self.spectrum_errors()
        rewards = np.array([
            0.0 if failed[i] else reward_increment(errors[i], self.config.reward_cap)
            for i in range(self.n_envs)
        ])
        done = failed | (self.interval >= self.config.horizon)
        info = [
            {
                "interval": int(self.interval[i]),
                "spectrum_error": float(errors[i]) if not failed[i] else float("nan"),
                "blowup": bool(failed[i]),
                "reason": self._fail_reasons[i],
            }
            for i in range(self.n_envs)
        ]
        for i in np.flatnonzero(failed):
            log.info("env %d terminated: %s", i, self._fail_reasons[i])
        return EnvStep(self.observe(), rewards, done, info)


def coarsening_factor(n_dns: int, n_les: int, dt_ratio: float) -> float:
    """Spatio-temporal coarsening ``(n_dns/n_les)^2 * dt_ratio``."""
    return (n_dns / n_les) ** 2 * dt_ratio
