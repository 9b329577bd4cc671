"""Contrastive policy optimization for the flow model.

A group of K candidates is sampled per conditioning input, scored, and each
score z-normalized within the group into an optimality probability
r in [0,1]. The loss mixes a positive branch (pull the current velocity
toward the target) and a negative branch (push away), weighted by r and 1-r,
with both branches defined as beta-mixtures of the frozen old model's
velocity and the current one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .flow_core import (
    FlowBatch,
    FlowSchedule,
    SamplerConfig,
    VelocityModel,
    interpolate,
    sample_ode,
    velocity_target,
)

SIGMA_FLOOR = 1e-12  # below this the group is treated as tied: r = 0.5


@dataclass
class CandidateGroup:
    cond: np.ndarray
    candidates: np.ndarray  # (K, d)
    rewards: np.ndarray | None = None  # (K,), filled after scoring

    def __post_init__(self):
        self.cond = np.asarray(self.cond, dtype=np.float64)
        self.candidates = np.atleast_2d(np.asarray(self.candidates, dtype=np.float64))
        if self.rewards is not None:
            self.rewards = np.asarray(self.rewards, dtype=np.float64)
            if self.rewards.shape != (self.k,):
                raise ShapeError(
                    f"candidate group: {self.rewards.shape[0]} rewards for {self.k} candidates"
                )

    @property
    def k(self):
        return self.candidates.shape[0]


@dataclass
class NftConfig:
    beta: float = 0.1
    learning_rate: float = 0.02
    steps_per_group: int = 4
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError("nft: beta must be positive")


def optimality(rewards) -> np.ndarray:
    """Reward -> optimality probability: r = 1/2 + 1/2 clip(z, -1, 1) with z
    the within-group z-score (population std). Tied groups map to 0.5."""
    rewards = np.atleast_1d(np.asarray(rewards, dtype=np.float64))
    if not np.all(np.isfinite(rewards)):
        raise NumericalError("optimality: non-finite reward in group")
    mu = rewards.mean()
    sigma = rewards.std()  # population (divide-by-K) std
    if sigma < SIGMA_FLOOR:
        return np.full_like(rewards, 0.5)
    z = np.clip((rewards - mu) / sigma, -1.0, 1.0)
    return 0.5 + 0.5 * z


def positive_velocity(v_old, v_theta, beta):
    """v+ = (1-beta) v_old + beta v_theta."""
    v_old, v_theta = _check_pair(v_old, v_theta)
    return (1.0 - beta) * v_old + beta * v_theta


def negative_velocity(v_old, v_theta, beta):
    """v- = (1+beta) v_old - beta v_theta."""
    v_old, v_theta = _check_pair(v_old, v_theta)
    return (1.0 + beta) * v_old - beta * v_theta


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"velocity mixture: shapes {a.shape} vs {b.shape}")
    return a, b


def nft_loss(model: VelocityModel, old_model: VelocityModel, group: CandidateGroup,
             schedule: FlowSchedule, beta: float, t=None, eps=None, rng=None):
    """Contrastive loss over one candidate group.

    Each candidate is re-noised via the forward schedule at a sampled t
    (pass t/eps explicitly for reproducible evaluation, or an rng). Returns
    (loss, gradient over the current model's parameters); the old model is
    evaluated frozen.
    """
    if old_model.widths != model.widths:
        raise ConfigError("nft_loss: old/current architecture mismatch")
    if group.rewards is None:
        raise ConfigError("nft_loss: group has no rewards")
    k, d = group.candidates.shape
    if rng is None:
        rng = np.random.default_rng(0)
    if t is None:
        t = rng.uniform(0.0, 1.0, size=k)
    else:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if eps is None:
        eps = rng.standard_normal((k, d))
    else:
        eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    cond = np.broadcast_to(group.cond, (k, group.cond.shape[-1]))
    batch = FlowBatch(x0=group.candidates, eps=eps, t=t, cond=cond)
    x_t = interpolate(batch, schedule)
    v = velocity_target(batch, schedule)
    r = optimality(group.rewards)[:, None]

    pred, acts = model._forward_cached(x_t, t, cond)
    v_old = old_model.forward(x_t, t, cond)
    v_pos = positive_velocity(v_old, pred, beta)
    v_neg = negative_velocity(v_old, pred, beta)
    dp = v_pos - v
    dn = v_neg - v
    loss = float(np.mean(
        r[:, 0] * np.sum(dp * dp, axis=1) + (1 - r[:, 0]) * np.sum(dn * dn, axis=1)
    ))
    # d loss / d pred, then backprop through the current network only
    grad_out = 2.0 * beta * (r * dp - (1 - r) * dn) / k
    grad = model.backward(acts, grad_out)
    return loss, grad


def derive_candidate_seed(group_seed: int, index: int) -> int:
    """Stable per-candidate sub-seed from the group seed."""
    return int(np.random.SeedSequence(entropy=[group_seed, index]).generate_state(1)[0])


def rollout(model: VelocityModel, cond, k: int, sampler: SamplerConfig) -> CandidateGroup:
    """Sample K candidates deterministically from distinct sub-seeds of the
    sampler's seed. Rewards are left unfilled."""
    if k < 1:
        raise ConfigError("rollout: K must be >= 1")
    cond = np.asarray(cond, dtype=np.float64)
    candidates = []
    for i in range(k):
        cfg = SamplerConfig(steps=sampler.steps, method=sampler.method,
                            seed=derive_candidate_seed(sampler.seed, i))
        candidates.append(sample_ode(model, cond, cfg))
    return CandidateGroup(cond=cond, candidates=np.stack(candidates))


def train_rl(model: VelocityModel, conditions, reward_fn, config: NftConfig,
             epochs: int, schedule: FlowSchedule | None = None, k: int = 8,
             seed: int = 0):
    """Per epoch: freeze the old model, roll out K candidates per condition
    with fresh sub-seeds, score with reward_fn(candidate, cond) in [0,1],
    normalize within the group, and take gradient steps on the contrastive
    loss. Returns (model, trace) where trace rows are (mean_reward, mean_r)."""
    schedule = schedule or FlowSchedule()
    conditions = [np.asarray(c, dtype=np.float64) for c in conditions]
    rng = np.random.default_rng(seed)
    trace = []
    for epoch in range(epochs):
        old_model = model.copy()
        epoch_rewards = []
        epoch_rs = []
        for ci, cond in enumerate(conditions):
            sampler = SamplerConfig(
                steps=config.sampler.steps, method=config.sampler.method,
                seed=derive_candidate_seed(seed, epoch * len(conditions) + ci))
            group = rollout(old_model, cond, k, sampler)
            rewards = np.array([reward_fn(c, cond) for c in group.candidates])
            bad = np.where((rewards < 0) | (rewards > 1) | ~np.isfinite(rewards))[0]
            if bad.size:
                raise ConfigError(
                    f"train_rl: reward outside [0,1] for condition {ci}, "
                    f"candidate(s) {bad.tolist()}")
            group.rewards = rewards
            epoch_rewards.append(rewards.mean())
            epoch_rs.append(optimality(rewards).mean())
            for _ in range(config.steps_per_group):
                _, grad = nft_loss(model, old_model, group, schedule,
                                   config.beta, rng=rng)
                model.params -= config.learning_rate * grad
        trace.append((float(np.mean(epoch_rewards)), float(np.mean(epoch_rs))))
    return model, trace


def write_reward_trace(path, trace) -> None:
    with open(path, "w") as f:
        f.write("epoch,mean_reward,mean_r\n")
        for i, (mr, mo) in enumerate(trace):
            f.write(f"{i},{mr!r},{mo!r}\n")


def dump_groups(path, groups) -> None:
    """JSONL group dump: cond id, base64 candidate vectors, rewards, r."""
    import base64
    import json

    with open(path, "w") as f:
        for gid, group in enumerate(groups):
            rewards = None if group.rewards is None else group.rewards.tolist()
            r = None if group.rewards is None else optimality(group.rewards).tolist()
            row = {
                "cond_id": gid,
                "candidates": [
                    base64.b64encode(c.astype("<f8").tobytes()).decode("ascii")
                    for c in group.candidates
                ],
                "rewards": rewards,
                "r": r,
            }
            f.write(json.dumps(row) + "\n")
