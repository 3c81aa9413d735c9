"""Adversarial wrappers realising the two threat models.

Both wrappers expose the same single-agent surface to the attack loop: the
adversary observes a state, submits an action, and receives a transition
whose extrinsic reward is the negated victim-success indicator (-1 on the
success step, 0 otherwise), so minimising the victim's return is plain
reward maximisation for the adversary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import ContinuousSpec, DiscreteSpec, EnvModel, TwoPlayerEnv

__all__ = ["Transition", "PerturbationMdp", "FixedVictimMdp"]


@dataclass
class Transition:
    """One adversary-side step.

    ``action`` is the adversary's raw action as sampled (what the importance
    ratios need); ``applied_action`` is what the environment actually executed
    after clamping, which is where the perturbation-budget invariant lives.
    ``terminal`` and ``truncated`` are mutually exclusive.
    """

    state: np.ndarray
    action: np.ndarray | int
    applied_action: np.ndarray | int
    ext_reward: float
    next_state: np.ndarray
    terminal: bool
    truncated: bool
    log_prob: float
    victim_succeeded: bool


class PerturbationMdp:
    """Single-agent threat model: bounded observation perturbations.

    The adversary sees the victim's true state and emits a perturbation that
    is clamped into the max-norm ``epsilon`` ball (never rejected) before
    being added to the observation the frozen victim acts on.
    """

    def __init__(self, env: EnvModel, victim, epsilon: float, reward: str = "sparse"):
        if isinstance(env, TwoPlayerEnv):
            raise ValueError("perturbation threat model applies to single-agent environments")
        if epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
        if reward not in ("sparse", "dense"):
            raise ValueError(f"reward mode must be 'sparse' or 'dense', got {reward!r}")
        if victim.observation_dim != env.state_dim:
            raise ValueError(
                f"victim observes {victim.observation_dim} dims, environment emits {env.state_dim}"
            )
        if reward == "dense" and not getattr(env, "dense", False):
            raise ValueError("dense attack reward requires the dense environment variant")
        self.env = env
        self.victim = victim
        self.epsilon = float(epsilon)
        self.reward_mode = reward
        self.state_dim = env.state_dim
        self.action_spec = ContinuousSpec(env.state_dim, self.epsilon)
        self.horizon = env.horizon
        self.discount = env.discount
        self.victim_dims = np.arange(env.state_dim)
        self.adversary_dims = np.arange(env.state_dim)

    def reset(self, seed: int) -> np.ndarray:
        return self.env.reset(seed)

    @property
    def done(self) -> bool:
        return self.env.done

    def step(self, perturbation: np.ndarray) -> Transition:
        state = self.env.state
        raw = np.asarray(perturbation, dtype=np.float64).reshape(self.state_dim)
        applied = np.clip(raw, -self.epsilon, self.epsilon)
        victim_action = self.victim.act(state + applied)
        out = self.env.step(victim_action)
        if self.reward_mode == "sparse":
            ext = -1.0 if out.success else 0.0
        else:
            ext = -out.dense_reward
        return Transition(
            state=state,
            action=raw,
            applied_action=applied,
            ext_reward=ext,
            next_state=out.state,
            terminal=out.terminal,
            truncated=out.truncated,
            log_prob=0.0,
            victim_succeeded=out.success,
        )


class FixedVictimMdp:
    """Two-player threat model reduced to a single-player MDP.

    The frozen victim computes its action from the joint state; both actions
    are applied simultaneously to the joint dynamics. The projector index
    tuples say which coordinates of the joint state belong to the victim and
    which to the adversary, and must partition them exactly.
    """

    def __init__(self, env: TwoPlayerEnv, victim):
        if not isinstance(env, TwoPlayerEnv):
            raise ValueError("fixed-victim threat model needs a two-player environment")
        if victim.observation_dim != env.state_dim:
            raise ValueError(
                f"victim observes {victim.observation_dim} dims, environment emits {env.state_dim}"
            )
        joint = sorted(env.victim_dims) + sorted(env.adversary_dims)
        if sorted(joint) != list(range(env.state_dim)):
            raise ValueError("victim and adversary projections must partition the joint state")
        self.env = env
        self.victim = victim
        self.state_dim = env.state_dim
        self.action_spec = env.adversary_action_spec
        self.horizon = env.horizon
        self.discount = env.discount
        self.victim_dims = np.asarray(env.victim_dims, dtype=np.int64)
        self.adversary_dims = np.asarray(env.adversary_dims, dtype=np.int64)

    def reset(self, seed: int) -> np.ndarray:
        return self.env.reset(seed)

    @property
    def done(self) -> bool:
        return self.env.done

    def step(self, action) -> Transition:
        state = self.env.state
        victim_action = self.victim.act(state)
        if isinstance(self.action_spec, ContinuousSpec):
            raw = np.asarray(action, dtype=np.float64).reshape(self.action_spec.dim)
            applied = self.action_spec.clamp(raw)
        else:
            raw = int(action)
            applied = raw
        out = self.env.step(victim_action, applied)
        return Transition(
            state=state,
            action=raw,
            applied_action=applied,
            ext_reward=-1.0 if out.success else 0.0,
            next_state=out.state,
            terminal=out.terminal,
            truncated=out.truncated,
            log_prob=0.0,
            victim_succeeded=out.success,
        )
