"""Clipped-surrogate policy optimisation over two reward streams.

The update consumes a rollout batch whose extrinsic rewards come from the
environment and whose intrinsic bonuses are filled in by the regularizer
stage. Advantages for both streams are estimated with GAE inside episode
boundaries only, optionally normalised per batch, and combined as
``A_ext + temperature * A_int`` before the usual clipped update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import Adam, PolicyNetwork

__all__ = [
    "PpoConfig",
    "EpisodeSpan",
    "RolloutBatch",
    "NumericalError",
    "gae",
    "batch_advantages",
    "normalize_stream",
    "ppo_update",
    "UpdateStats",
]


class NumericalError(RuntimeError):
    """A loss or gradient stopped being finite; the update was aborted."""


@dataclass
class PpoConfig:
    clip_ratio: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    normalize_advantages: bool = True
    batch_steps: int = 2048

    def validate(self) -> None:
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError(f"clip_ratio must lie in (0, 1), got {self.clip_ratio}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        for name in ("epochs", "minibatch_size", "batch_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class EpisodeSpan:
    """Contiguous slice of a batch belonging to one episode (or its tail).

    ``terminal`` means the environment ended the episode; anything else
    (horizon truncation or a batch cut) bootstraps from ``final_next_state``.
    ``completed`` distinguishes episodes that actually ended here from the
    trailing span a batch boundary cut open.
    """

    start: int
    end: int
    terminal: bool
    final_next_state: np.ndarray
    completed: bool = True


@dataclass
class RolloutBatch:
    """On-policy transitions collected by the latest adversary."""

    states: np.ndarray  # (N, dim)
    actions: np.ndarray  # (N, act_dim) float or (N,) int
    log_probs: np.ndarray  # (N,)
    ext_rewards: np.ndarray  # (N,)
    episodes: list[EpisodeSpan]
    episode_returns: list[float]  # extrinsic returns of episodes completed here
    episode_start_states: np.ndarray  # (N, dim) initial state of each row's episode
    int_bonuses: np.ndarray | None = None
    adv_ext: np.ndarray | None = None
    adv_int: np.ndarray | None = None
    ret_ext: np.ndarray | None = None
    ret_int: np.ndarray | None = None

    def __len__(self) -> int:
        return self.states.shape[0]


def gae(rewards: np.ndarray, values: np.ndarray, discount: float, lam: float) -> np.ndarray:
    """Generalized advantage estimate for one episode.

    ``values`` must hold one bootstrap entry past the episode end (zero when
    the episode ended terminally, the predicted value when truncated), i.e.
    ``len(values) == len(rewards) + 1``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ValueError(f"values must have {rewards.shape[0] + 1} entries, got {values.shape[0]}")
    deltas = rewards + discount * values[1:] - values[:-1]
    adv = np.empty_like(deltas)
    acc = 0.0
    for t in range(deltas.shape[0] - 1, -1, -1):
        acc = deltas[t] + discount * lam * acc
        adv[t] = acc
    return adv


def batch_advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstraps: np.ndarray,
    episodes: list[EpisodeSpan],
    discount: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-episode GAE over a whole batch; returns (advantages, return targets)."""
    adv = np.empty_like(np.asarray(rewards, dtype=np.float64))
    for i, ep in enumerate(episodes):
        v = np.append(values[ep.start : ep.end], bootstraps[i])
        adv[ep.start : ep.end] = gae(rewards[ep.start : ep.end], v, discount, lam)
    returns = adv + values
    return adv, returns


def normalize_stream(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


@dataclass
class UpdateStats:
    surrogate: float = 0.0
    value_loss: float = 0.0
    clip_fraction: float = 0.0
    approx_kl: float = 0.0
    updates: int = 0

    def accumulate(self, stats: dict, value_loss: float) -> None:
        self.surrogate += stats["surrogate"]
        self.value_loss += value_loss
        self.clip_fraction += stats["clip_fraction"]
        self.approx_kl += stats["approx_kl"]
        self.updates += 1

    def finish(self) -> "UpdateStats":
        n = max(self.updates, 1)
        return UpdateStats(
            surrogate=self.surrogate / n,
            value_loss=self.value_loss / n,
            clip_fraction=self.clip_fraction / n,
            approx_kl=self.approx_kl / n,
            updates=self.updates,
        )


def ppo_update(
    net: PolicyNetwork,
    params: np.ndarray,
    adam: Adam,
    batch: RolloutBatch,
    temperature: float,
    cfg: PpoConfig,
    rng: np.random.Generator,
    include_intrinsic: bool = True,
) -> tuple[np.ndarray, UpdateStats]:
    """Run the configured epochs of minibatch ascent on the clipped surrogate.

    With ``include_intrinsic=False`` the intrinsic stream is bypassed entirely
    (no combined advantage, no intrinsic value regression), which makes the
    parameter trajectory bit-identical to plain single-stream PPO.
    """
    if batch.adv_ext is None or batch.ret_ext is None:
        raise ValueError("batch advantages must be populated before ppo_update")
    adv_e = normalize_stream(batch.adv_ext) if cfg.normalize_advantages else batch.adv_ext
    if include_intrinsic:
        if batch.adv_int is None or batch.ret_int is None:
            raise ValueError("intrinsic advantages missing")
        if not 0.0 < temperature <= 1.0:
            raise ValueError(f"temperature must lie in (0, 1], got {temperature}")
        adv_i = normalize_stream(batch.adv_int) if cfg.normalize_advantages else batch.adv_int
        advantages = adv_e + temperature * adv_i
    else:
        advantages = adv_e

    n = len(batch)
    totals = UpdateStats()
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch_size):
            idx = order[lo : lo + cfg.minibatch_size]
            loss, grad, stats = net.ppo_loss_and_grad(
                params,
                batch.states[idx],
                batch.actions[idx],
                batch.log_probs[idx],
                advantages[idx],
                batch.ret_ext[idx],
                batch.ret_int[idx] if include_intrinsic else None,
                cfg.clip_ratio,
                cfg.value_coef,
                cfg.entropy_coef,
            )
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite PPO loss ({loss}) at update {totals.updates}")
            params = adam.step(params, grad, cfg.learning_rate)
            totals.accumulate(stats, stats["value_loss"])
    return params, totals.finish()
