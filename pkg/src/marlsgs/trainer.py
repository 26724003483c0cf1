"""Shared Gaussian policy over closure coefficients, trained with a clipped
surrogate objective and generalized advantage estimation.

Every agent in every environment runs the same network on its own
observation: five normalized local invariants plus the global log enstrophy
spectrum sampled at a few log-spaced wavenumbers.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn

from . import __version__
from .diagnostics import (
    Spectrum,
    energy_spectrum,
    enstrophy_spectrum,
    spectrum_log_error,
    tail_fraction,
    vorticity_pdf,
)
from .env import EnvConfig, LesEnv, Observation, TargetSpectrum, reward_band
from .solver import PhysicsParams, SnapshotArchive
from .spectral import SpectralField, inv, sharp_filter

log = logging.getLogger(__name__)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
OBS_CLIP = 10.0
DTYPE = torch.float64


# --------------------------------------------------------------------------
# observations


def global_features(log_spectrum: np.ndarray, n_global: int = 8) -> np.ndarray:
    """Log spectrum resampled at ``n_global`` log-spaced wavenumbers in ``[1, K]``."""
    k_max = log_spectrum.shape[-1]
    k = np.arange(1, k_max + 1)
    kq = np.geomspace(1.0, k_max, n_global)
    lk = np.log(k)
    flat = log_spectrum.reshape(-1, k_max)
    out = np.stack([np.interp(np.log(kq), lk, row) for row in flat])
    return out.reshape(log_spectrum.shape[:-1] + (n_global,))


def policy_features(obs: Observation, n_global: int = 8) -> np.ndarray:
    """Per-agent feature vectors, shape ``(E, A, 5 + n_global)``."""
    g = global_features(obs.global_, n_global)
    g = np.broadcast_to(g[:, None, :], obs.local.shape[:2] + (n_global,))
    return np.concatenate([obs.local, g], axis=-1)


class RunningStats:
    """Streaming mean/variance (pairwise merge)."""

    def __init__(self, dim: int, mean=None, var=None, count: float = 0.0):
        self.mean = np.zeros(dim) if mean is None else np.array(mean, dtype=float)
        self.var = np.ones(dim) if var is None else np.array(var, dtype=float)
        self.count = float(count)

    def update(self, x: np.ndarray) -> None:
        x = x.reshape(-1, x.shape[-1])
        n = x.shape[0]
        if n == 0:
            return
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        tot = self.count + n
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * n + delta**2 * self.count * n / tot
        self.mean = self.mean + delta * n / tot
        self.var = m2 / tot
        self.count = tot

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -OBS_CLIP, OBS_CLIP)


# --------------------------------------------------------------------------
# network and snapshot


def _mlp(sizes) -> nn.Sequential:
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1], dtype=DTYPE))
        if i < len(sizes) - 2:
            layers.append(nn.Tanh())
    return nn.Sequential(*layers)


class ActorCritic(nn.Module):
    def __init__(self, layer_sizes, c_max: float = 1.0, init_std: float = 0.3):
        super().__init__()
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.c_max = float(c_max)
        self.actor = _mlp(self.layer_sizes)
        self.critic = _mlp(self.layer_sizes)
        nn.init.zeros_(self.actor[-1].weight)
        nn.init.zeros_(self.actor[-1].bias)
        self.log_std = nn.Parameter(torch.full((self.layer_sizes[-1],), math.log(init_std * c_max), dtype=DTYPE))

    def forward(self, x: torch.Tensor):
        mean = self.c_max * torch.sigmoid(self.actor(x))
        std = torch.exp(torch.clamp(self.log_std, LOG_STD_MIN, LOG_STD_MAX)).expand_as(mean)
        value = self.critic(x).squeeze(-1)
        return mean, std, value

    def net_parameters(self):
        return list(self.actor.parameters()) + list(self.critic.parameters())


@dataclass(eq=False)
class PolicySnapshot:
    layer_sizes: tuple
    weights: np.ndarray
    log_std: np.ndarray
    obs_mean: np.ndarray
    obs_var: np.ndarray
    obs_count: float = 0.0
    version: int = 0
    c_max: float = 1.0

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("policy weights must be finite")
        self.log_std = np.clip(np.asarray(self.log_std, dtype=float), LOG_STD_MIN, LOG_STD_MAX)

    @property
    def obs_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def stats(self) -> RunningStats:
        return RunningStats(self.obs_dim, self.obs_mean, self.obs_var, self.obs_count)

    @classmethod
    def initial(cls, obs_dim: int, hidden=(64, 64), c_max: float = 1.0, init_std: float = 0.3, seed: int = 0):
        torch.manual_seed(seed)
        net = ActorCritic((obs_dim, *hidden, 1), c_max, init_std)
        return cls.from_module(net, RunningStats(obs_dim), version=0)

    @classmethod
    def from_module(cls, net: ActorCritic, stats: RunningStats, version: int) -> "PolicySnapshot":
        with torch.no_grad():
            flat = torch.cat([p.reshape(-1) for p in net.net_parameters()]).numpy().copy()
            log_std = net.log_std.detach().numpy().copy()
        return cls(net.layer_sizes, flat, log_std, stats.mean.copy(), stats.var.copy(),
                   stats.count, version, net.c_max)

    def to_module(self) -> ActorCritic:
        net = ActorCritic(self.layer_sizes, self.c_max)
        params = net.net_parameters()
        n_expected = sum(p.numel() for p in params)
        if self.weights.size != n_expected:
            raise ValueError(f"weight vector has {self.weights.size} entries, architecture needs {n_expected}")
        with torch.no_grad():
            offset = 0
            for p in params:
                p.copy_(torch.from_numpy(self.weights[offset:offset + p.numel()]).reshape(p.shape))
                offset += p.numel()
            net.log_std.copy_(torch.from_numpy(self.log_std))
        return net

    def same_as(self, other: "PolicySnapshot") -> bool:
        return (
            self.layer_sizes == other.layer_sizes and self.version == other.version
            and self.c_max == other.c_max and self.obs_count == other.obs_count
            and all(np.array_equal(a, b) for a, b in [
                (self.weights, other.weights), (self.log_std, other.log_std),
                (self.obs_mean, other.obs_mean), (self.obs_var, other.obs_var)])
        )


CHECKPOINT_MAGIC = b"MSGSCKPT"
CHECKPOINT_FORMAT = 1


def save_checkpoint(path, snap: PolicySnapshot) -> None:
    """Binary checkpoint: magic, uint32 format, uint64 header length, JSON
    header, then float64 little-endian arrays in header order."""
    arrays = [("weights", snap.weights), ("log_std", snap.log_std),
              ("obs_mean", snap.obs_mean), ("obs_var", snap.obs_var)]
    header = {
        "format": "marlsgs-policy-checkpoint",
        "code_version": __version__,
        "layer_sizes": list(snap.layer_sizes),
        "version": snap.version,
        "c_max": snap.c_max,
        "obs_count": snap.obs_count,
        "arrays": [[name, int(a.size)] for name, a in arrays],
        "layout": "float64 little-endian arrays concatenated in 'arrays' order",
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_FORMAT, len(hb)))
        fh.write(hb)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> PolicySnapshot:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a policy checkpoint")
    fmt, hlen = struct.unpack_from("<IQ", data, 8)
    if fmt != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {fmt}")
    pos = 20
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    arrays = {}
    for name, size in header["arrays"]:
        arrays[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).astype(float)
        pos += 8 * size
    if pos != len(data):
        raise ValueError(f"{path}: checkpoint size mismatch")
    return PolicySnapshot(tuple(header["layer_sizes"]), arrays["weights"], arrays["log_std"],
                          arrays["obs_mean"], arrays["obs_var"], header["obs_count"],
                          header["version"], header["c_max"])


# --------------------------------------------------------------------------
# acting


def policy_forward(snap: PolicySnapshot, obs: np.ndarray, net: Optional[ActorCritic] = None):
    """``(mean, std, value)`` for already-normalized observations ``(..., obs_dim)``."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != snap.obs_dim:
        raise ValueError(f"observation has {obs.shape[-1]} entries, policy expects {snap.obs_dim}")
    net = snap.to_module() if net is None else net
    with torch.no_grad():
        mean, std, value = net(torch.from_numpy(obs))
    return mean.numpy()[..., 0], std.numpy()[..., 0], value.numpy()


def gaussian_log_prob(x, mean, std):
    return -0.5 * ((x - mean) / std) ** 2 - np.log(std) - 0.5 * np.log(2 * np.pi)


def sample_action(mean, std, rng: np.random.Generator, c_max: float = 1.0):
    """Gaussian sample. Returns ``(raw, clipped, log_prob)``; the log-probability
    is of the raw (pre-clipping) sample, the clipped value goes to the environment."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise ValueError("policy standard deviation must be positive")
    raw = mean + std * rng.standard_normal(mean.shape)
    return raw, np.clip(raw, 0.0, c_max), gaussian_log_prob(raw, mean, std)


# --------------------------------------------------------------------------
# learning


def compute_advantages(rewards, values, dones, last_values, gamma=0.99, lam=0.95, normalize=True):
    """Generalized advantage estimation along axis 0 (time).

    ``dones[t]`` marks that the episode ended after step ``t``; no value is
    bootstrapped across it. Returns ``(advantages, returns)`` where
    ``returns = raw advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape[0] == 0:
        raise ValueError("empty batch")
    dones = np.asarray(dones, dtype=float)
    while rewards.ndim < values.ndim:
        rewards = rewards[..., None]
        dones = dones[..., None]
    adv = np.zeros(np.broadcast_shapes(rewards.shape, values.shape))
    next_value = np.asarray(last_values, dtype=float)
    running = np.zeros(adv.shape[1:])
    for t in range(adv.shape[0] - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    returns = adv + values
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


@dataclass
class TrajectoryBatch:
    obs: np.ndarray  # (T, E, A, D) normalized
    actions: np.ndarray  # (T, E, A) raw samples
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray  # (T, E)
    dones: np.ndarray  # (T, E)
    last_values: np.ndarray  # (E, A)
    version: int


@dataclass
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    minibatch: int = 256
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5


class PPOLearner:
    """Holds the network and optimizer state across updates."""

    def __init__(self, snap: PolicySnapshot, hyper: PPOConfig, seed: int = 0):
        self.hyper = hyper
        self.snap = snap
        self.net = snap.to_module()
        self.opt = torch.optim.Adam(self.net.parameters(), lr=hyper.lr)
        self.rng = np.random.default_rng(seed)

    def update(self, batch: TrajectoryBatch, stats: Optional[RunningStats] = None) -> PolicySnapshot:
        h = self.hyper
        if batch.version != self.snap.version:
            raise ValueError(
                f"batch from policy version {batch.version}, current version is {self.snap.version}"
            )
        adv, ret = compute_advantages(batch.rewards, batch.values, batch.dones, batch.last_values,
                                      h.gamma, h.gae_lambda)
        d = batch.obs.shape[-1]
        x = torch.from_numpy(batch.obs.reshape(-1, d))
        a = torch.from_numpy(batch.actions.reshape(-1))
        lp_old = torch.from_numpy(batch.log_probs.reshape(-1))
        adv_t = torch.from_numpy(adv.reshape(-1))
        ret_t = torch.from_numpy(ret.reshape(-1))
        n = x.shape[0]
        mb = min(h.minibatch, n)
        stats_out = []
        for _ in range(h.epochs):
            perm = torch.from_numpy(self.rng.permutation(n))
            for start in range(0, n, mb):
                idx = perm[start:start + mb]
                mean, std, value = self.net(x[idx])
                mean, std = mean[:, 0], std[:, 0]
                lp = -0.5 * ((a[idx] - mean) / std) ** 2 - torch.log(std) - 0.5 * math.log(2 * math.pi)
                ratio = torch.exp(lp - lp_old[idx])
                surr = torch.minimum(ratio * adv_t[idx], torch.clamp(ratio, 1 - h.clip, 1 + h.clip) * adv_t[idx])
                policy_loss = -surr.mean()
                value_loss = ((value - ret_t[idx]) ** 2).mean()
                entropy = (torch.log(std) + 0.5 * math.log(2 * math.pi * math.e)).mean()
                loss = policy_loss + h.value_coef * value_loss - h.entropy_coef * entropy
                if not torch.isfinite(loss):
                    raise FloatingPointError(
                        f"non-finite loss (policy {policy_loss.item()}, value {value_loss.item()}) "
                        f"at version {self.snap.version}"
                    )
                self.opt.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(list(self.net.actor.parameters()) + [self.net.log_std], h.max_grad_norm)
                nn.utils.clip_grad_norm_(list(self.net.critic.parameters()), h.max_grad_norm)
                self.opt.step()
                with torch.no_grad():
                    self.net.log_std.clamp_(LOG_STD_MIN, LOG_STD_MAX)
                stats_out.append((policy_loss.item(), value_loss.item()))
        st = stats if stats is not None else self.snap.stats
        self.snap = PolicySnapshot.from_module(self.net, st, self.snap.version + 1)
        self.last_losses = np.mean(stats_out, axis=0)
        return self.snap


def update(snap: PolicySnapshot, batch: TrajectoryBatch, hyper: PPOConfig, seed: int = 0) -> PolicySnapshot:
    """One update from a fresh optimizer state."""
    return PPOLearner(snap, hyper, seed).update(batch)


# --------------------------------------------------------------------------
# training loop


@dataclass
class TrainerConfig:
    n_envs: int = 4
    n_updates: int = 200
    rollout_length: int = 50
    hidden: tuple = (64, 64)
    n_global: int = 8
    init_std: float = 0.3
    checkpoint_every: int = 50
    seed: int = 0
    ppo: PPOConfig = field(default_factory=PPOConfig)

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if isinstance(self.ppo, dict):
            self.ppo = PPOConfig(**self.ppo)


@dataclass
class TrainResult:
    snapshot: PolicySnapshot
    log: list
    episodes: list


def _json_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True) + "\n"


def train(
    params: PhysicsParams,
    env_config: EnvConfig,
    target: TargetSpectrum,
    config: TrainerConfig,
    init_archive: Optional[SnapshotArchive] = None,
    out_dir=None,
    snapshot: Optional[PolicySnapshot] = None,
) -> TrainResult:
    """Collect rollouts from ``n_envs`` environments and update the shared policy.

    Writes ``train_log.jsonl``, ``episodes.jsonl`` and periodic checkpoints to
    ``out_dir`` when given. Environment blow-ups end episodes; they never abort
    training.
    """
    torch.manual_seed(config.seed)
    env = LesEnv(params, env_config, target, init_archive, config.n_envs, seed=config.seed)
    obs_dim = 5 + config.n_global
    if snapshot is None:
        snapshot = PolicySnapshot.initial(obs_dim, config.hidden, env_config.c_max, config.init_std, config.seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "train_log.jsonl").write_text("")
        (out / "episodes.jsonl").write_text("")
    if config.n_updates == 0:
        return TrainResult(snapshot, [], [])

    learner = PPOLearner(snapshot, config.ppo, seed=config.seed)
    stats = snapshot.stats
    act_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    obs = env.observe()
    ep_return = np.zeros(env.n_envs)
    ep_err = [[] for _ in range(env.n_envs)]
    episodes, records = [], []
    t_start = time.perf_counter()
    T, E, A = config.rollout_length, env.n_envs, env.layout.n_agents

    for u in range(config.n_updates):
        net = learner.net
        buf_obs = np.zeros((T, E, A, obs_dim))
        buf_act = np.zeros((T, E, A))
        buf_lp = np.zeros((T, E, A))
        buf_val = np.zeros((T, E, A))
        buf_rew = np.zeros((T, E))
        buf_done = np.zeros((T, E))
        finished, step_errs = [], []
        for t in range(T):
            feats = policy_features(obs, config.n_global)
            stats.update(feats)
            x = stats.normalize(feats)
            with torch.no_grad():
                mean, std, value = net(torch.from_numpy(x))
            mean, std = mean.numpy()[..., 0], std.numpy()[..., 0]
            raw, act, lp = sample_action(mean, std, act_rng, env_config.c_max)
            res = env.step(act)
            buf_obs[t], buf_act[t], buf_lp[t], buf_val[t] = x, raw, lp, value.numpy()
            buf_rew[t], buf_done[t] = res.reward, res.done
            ep_return += res.reward
            for i, inf in enumerate(res.info):
                if not inf["blowup"]:
                    ep_err[i].append(inf["spectrum_error"])
                    step_errs.append(inf["spectrum_error"])
            for i in np.flatnonzero(res.done):
                ep = {
                    "episode": len(episodes), "env": int(i), "update": u,
                    "return": float(ep_return[i]), "length": int(res.info[i]["interval"]),
                    "blowup": res.info[i]["blowup"], "reason": res.info[i]["reason"],
                    "mean_spectrum_error": float(np.mean(ep_err[i])) if ep_err[i] else None,
                }
                episodes.append(ep)
                finished.append(ep)
                if out is not None:
                    with open(out / "episodes.jsonl", "a") as fh:
                        fh.write(_json_line(ep))
                ep_return[i] = 0.0
                ep_err[i] = []
            if np.any(res.done):
                env.reset_envs(res.done)
                obs = env.observe()
            else:
                obs = res.observations
        feats = policy_features(obs, config.n_global)
        with torch.no_grad():
            _, _, last_v = net(torch.from_numpy(stats.normalize(feats)))
        batch = TrajectoryBatch(buf_obs, buf_act, buf_lp, buf_val, buf_rew, buf_done,
                                last_v.numpy(), learner.snap.version)
        snapshot = learner.update(batch, stats)
        rec = {
            "update": u,
            "version": snapshot.version,
            "mean_episode_reward": float(np.mean([e["return"] for e in finished])) if finished else None,
            "episodes_finished": len(finished),
            "mean_step_reward": float(buf_rew.mean()),
            "spectrum_error": float(np.mean(step_errs)) if step_errs else None,
            "mean_action": float(np.clip(buf_act, 0, env_config.c_max).mean()),
            "policy_std": float(np.exp(snapshot.log_std[0])),
            "policy_loss": float(learner.last_losses[0]),
            "value_loss": float(learner.last_losses[1]),
            "wall_time": round(time.perf_counter() - t_start, 3),
        }
        records.append(rec)
        log.info("update %d: step reward %.4g, spectrum error %s, mean action %.4f",
                 u, rec["mean_step_reward"], rec["spectrum_error"], rec["mean_action"])
        if out is not None:
            with open(out / "train_log.jsonl", "a") as fh:
                fh.write(_json_line(rec))
            if config.checkpoint_every and (u + 1) % config.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_{snapshot.version:05d}.bin", snapshot)
    if out is not None:
        save_checkpoint(out / "checkpoint_final.bin", snapshot)
    return TrainResult(snapshot, records, episodes)


# --------------------------------------------------------------------------
# evaluation

BASELINES = ("dynamic_smagorinsky", "dynamic_leith", "none")


@dataclass
class RolloutStats:
    name: str
    enstrophy: Spectrum
    energy: Spectrum
    pdf: object
    spectrum_error: float
    stable: bool
    intervals: int
    mean_coefficient: Optional[float] = None
    # exceedance of fixed thresholds in units of the reference run's sigma
    reference_tails: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "spectrum_log_error": self.spectrum_error,
            "sigma_omega": self.pdf.sigma,
            "tail_fraction_3sigma": self.pdf.tail_fractions.get(3.0),
            "tail_fraction_4sigma": self.pdf.tail_fractions.get(4.0),
            "tail_fraction_3sigma_ref": self.reference_tails.get(3.0),
            "tail_fraction_4sigma_ref": self.reference_tails.get(4.0),
            "stable": self.stable,
            "intervals": self.intervals,
            "mean_coefficient": self.mean_coefficient,
        }


def _field_stats(name, fields: list, target: TargetSpectrum, k_max: int, stable=True, intervals=0, mean_c=None,
                 ref_sigma=None):
    ens = np.mean([enstrophy_spectrum(f).values for f in fields], axis=0)
    en = np.mean([energy_spectrum(f).values for f in fields], axis=0)
    k = np.arange(1, len(ens) + 1)
    ens_s, en_s = Spectrum(k, ens), Spectrum(k, en)
    err = spectrum_log_error(ens_s.band(k_max), target.spectrum)
    values = [inv(f.coeffs, f.grid.n) for f in fields]
    pdf = vorticity_pdf(values)
    sigma = pdf.sigma if ref_sigma is None else ref_sigma
    pooled = np.concatenate([v.ravel() for v in values])
    ref_tails = {t: tail_fraction(pooled, t, sigma) for t in pdf.tail_fractions}
    return RolloutStats(name, ens_s, en_s, pdf, err, stable, intervals, mean_c, ref_tails)


def policy_actions(snap: PolicySnapshot, net: ActorCritic, obs: Observation, n_global: int) -> np.ndarray:
    x = snap.stats.normalize(policy_features(obs, n_global))
    mean, _, _ = policy_forward(snap, x, net)
    return mean


def les_rollout(env: LesEnv, closure, horizon: int, burn_in: int = 0, snap=None, n_global: int = 8, name=None,
                ref_sigma=None):
    """Run one episode from ``env``'s current state, collecting a field every interval."""
    net = snap.to_module() if snap is not None else None
    fields, coeffs = [], []
    stable = True
    done_intervals = 0
    for i in range(horizon):
        if closure == "policy":
            a = policy_actions(snap, net, env.observe(), n_global)
            coeffs.append(float(np.clip(a, 0, env.config.c_max).mean()))
            failed = env.advance(a)
        else:
            failed = env.advance(closure)
        if failed[0]:
            stable = False
            break
        done_intervals = i + 1
        if i >= burn_in:
            fields.append(SpectralField(env.grid, env.w[0].copy()))
    if not fields:
        fields = [SpectralField(env.grid, np.zeros(env.grid.spectral_shape, complex))]
    mean_c = float(np.mean(coeffs)) if coeffs else None
    return _field_stats(name or str(closure), fields, env.target, env.k_max, stable, done_intervals, mean_c,
                        ref_sigma)


def evaluate(
    snap: Optional[PolicySnapshot],
    params: PhysicsParams,
    env_config: EnvConfig,
    target: TargetSpectrum,
    init_archive: SnapshotArchive,
    reference: SnapshotArchive,
    horizon: int,
    seed: int = 12345,
    burn_in: int = 0,
    n_global: int = 8,
    baselines=BASELINES,
) -> dict:
    """Deterministic (mean-action) rollout of the policy plus baseline closures
    from the same initial field, and the sharp-filtered DNS reference.

    Besides each run's own-sigma tail fractions, every run reports exceedance
    of thresholds fixed in units of the reference sigma.
    """
    if horizon < 1:
        raise ValueError("evaluation horizon must be >= 1")
    ref_fields = [sharp_filter(reference.field(i), env_config.n_les) for i in range(len(reference))]
    ref = _field_stats("filtered_dns", ref_fields, target, reward_band(env_config.n_les), True, len(ref_fields))
    out = {}
    runs = ([("marl", "policy")] if snap is not None else []) + [(b, b) for b in baselines]
    for name, closure in runs:
        env = LesEnv(params, replace(env_config, horizon=horizon), target, init_archive, 1, seed)
        out[name] = les_rollout(env, closure, horizon, burn_in, snap, n_global, name, ref.pdf.sigma)
        log.info("evaluated %s: error %.4g stable %s", name, out[name].spectrum_error, out[name].stable)
    out["filtered_dns"] = ref
    return out
