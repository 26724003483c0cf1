"""Run configuration: the three test cases and their desk-scale variants."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from .env import EnvConfig
from .solver import PhysicsParams
from .trainer import PPOConfig, TrainerConfig

# Re, beta, kappa_f, drag, sigma(omega), n_les, training horizon and
# update cadence (both in units of the LES step)
TEST_CASES = {
    1: dict(re=20000.0, beta=0.0, kappa_f=4, drag=0.1, sigma_omega=5.51, n_les=32,
            training_horizon=10000, update_every=10),
    2: dict(re=20000.0, beta=20.0, kappa_f=4, drag=0.1, sigma_omega=10.75, n_les=32,
            training_horizon=20000, update_every=20),
    3: dict(re=20000.0, beta=0.0, kappa_f=25, drag=0.1, sigma_omega=13.01, n_les=256,
            training_horizon=10000, update_every=10),
}
DT_RATIO = 10
N_DNS = 1024
N_TARGET_SNAPSHOTS = 10

DEFAULT_PATHS = {
    "archive": "dns_archive.bin",
    "target_archive": "dns_target.bin",
    "init_archive": "dns_init.bin",
    "target": "target.csv",
    "train_dir": "train",
    "checkpoint": "train/checkpoint_final.bin",
    "eval_dir": "eval",
}


@dataclass
class RunConfig:
    case: int = 1
    physics: PhysicsParams = field(default_factory=lambda: PhysicsParams(re=20000.0, beta=0.0, drag=0.1, kappa_f=4))
    n_dns: int = N_DNS
    n_les: int = 32
    dt_dns: float = 2e-4
    dt_ratio: int = DT_RATIO
    spinup_time: float = 50.0
    sample_interval: float = 2.0
    n_target_snapshots: int = N_TARGET_SNAPSHOTS
    n_init_snapshots: int = 10
    training_horizon: int = 10000
    update_every: int = 10
    agents_per_side: Optional[int] = None
    kind: str = "smagorinsky"
    c_max: float = 1.0
    seed: int = 0
    eval_horizon: int = 500
    eval_burn_in: int = 50
    eval_seed: int = 12345
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    paths: dict = field(default_factory=lambda: dict(DEFAULT_PATHS))

    def __post_init__(self):
        if isinstance(self.physics, dict):
            self.physics = PhysicsParams(**self.physics)
        if isinstance(self.trainer, dict):
            self.trainer = TrainerConfig(**self.trainer)
        if self.n_les > self.n_dns:
            raise ValueError(f"n_les={self.n_les} exceeds n_dns={self.n_dns}")
        if self.physics.forced and self.physics.kappa_f > self.n_les // 3:
            raise ValueError(
                f"forcing wavenumber {self.physics.kappa_f} is not resolved by the {self.n_les}-point LES grid"
            )
        if self.training_horizon < self.update_every:
            raise ValueError("training horizon shorter than one policy-update interval")
        self.env_config()  # validates kind and layout defaults

    @property
    def dt_les(self) -> float:
        return self.dt_dns * self.dt_ratio

    @property
    def horizon_intervals(self) -> int:
        return self.training_horizon // self.update_every

    @property
    def spinup_steps(self) -> int:
        return int(round(self.spinup_time / self.dt_dns))

    @property
    def sample_every(self) -> int:
        return max(1, int(round(self.sample_interval / self.dt_dns)))

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            n_les=self.n_les, dt=self.dt_les, steps_per_action=self.update_every,
            horizon=self.horizon_intervals, kind=self.kind,
            agents_per_side=self.agents_per_side, c_max=self.c_max,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trainer"]["hidden"] = list(d["trainer"]["hidden"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "trainer" in d and isinstance(d["trainer"], dict):
            t = dict(d["trainer"])
            if isinstance(t.get("ppo"), dict):
                t["ppo"] = PPOConfig(**t["ppo"])
            d["trainer"] = TrainerConfig(**t)
        if "paths" in d:
            d["paths"] = {**DEFAULT_PATHS, **d["paths"]}
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.loads(fh.read())


def case_config(case: int) -> RunConfig:
    """Full-scale configuration for one of the three test cases."""
    if case not in TEST_CASES:
        raise ValueError(f"case must be one of {sorted(TEST_CASES)}, got {case}")
    row = TEST_CASES[case]
    return RunConfig(
        case=case,
        physics=PhysicsParams(re=row["re"], beta=row["beta"], drag=row["drag"], kappa_f=row["kappa_f"]),
        n_les=row["n_les"],
        training_horizon=row["training_horizon"],
        update_every=row["update_every"],
    )


def scale_config(cfg: RunConfig, factor: int) -> RunConfig:
    """Shrink a run by an integer ``factor`` for desk-scale work.

    DNS grid, LES grid and training horizon are divided by the factor, so the
    spatial coarsening ratio is kept. The Reynolds number is divided and the
    DNS step multiplied by the same factor to keep the shrunk DNS resolved and
    the CFL number roughly unchanged.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"scale factor must be a positive integer, got {factor}")
    if factor == 1:
        return cfg
    n_dns = max(16, (cfg.n_dns // factor) // 2 * 2)
    n_les = max(8, (cfg.n_les // factor) // 2 * 2)
    n_les = min(n_les, n_dns // 2)
    horizon = max(cfg.update_every, cfg.training_horizon // factor)
    return replace(
        cfg,
        physics=replace(cfg.physics, re=cfg.physics.re / factor),
        n_dns=n_dns,
        n_les=n_les,
        dt_dns=cfg.dt_dns * factor,
        training_horizon=horizon,
    )


def desk_config(case: int = 1) -> RunConfig:
    """The reduced Case-1-like setup used by the acceptance run:
    128^2 DNS at Re=2000, 32^2 LES, 500 action intervals per episode.

    With a shared reward, each agent's exploration noise is mostly drowned by
    the others', so the desk run uses a 4x4 agent lattice and a short
    discount horizon to make the policy gradient usable within 200 updates.
    """
    cfg = case_config(case)
    return replace(
        cfg,
        physics=replace(cfg.physics, re=2000.0),
        n_dns=128,
        n_les=32,
        dt_dns=1.5e-3,
        spinup_time=30.0,
        sample_interval=2.0,
        training_horizon=500 * cfg.update_every,
        eval_horizon=500,
        agents_per_side=4,
        trainer=TrainerConfig(n_envs=4, n_updates=200, rollout_length=500,
                              ppo=PPOConfig(gamma=0.9, minibatch=1024)),
    )
