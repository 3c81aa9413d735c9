"""Built-in episodic environments.

Three deliberately small tasks cover the structural features the attack
machinery needs: a tabular chain (enumerable, exact linear-algebra oracles),
a continuous 2-D navigation task (KNN-friendly state space, sparse success),
and a two-player gate-crossing game (joint state split between a victim and
an adversary).

All randomness is injected at ``reset(seed)``; dynamics are pure, so equal
seeds and equal action sequences reproduce episodes bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EpisodeOver",
    "ContinuousSpec",
    "DiscreteSpec",
    "StepOutcome",
    "EnvModel",
    "TwoPlayerEnv",
    "GridChain",
    "PointGoal",
    "GateRun",
    "built_in_environments",
    "make_env",
]


class EpisodeOver(RuntimeError):
    """Raised when ``step`` is called after the episode already ended."""


@dataclass(frozen=True)
class ContinuousSpec:
    """Box action space with symmetric per-coordinate bounds."""

    dim: int
    bound: float

    def clamp(self, action: np.ndarray) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(self.dim)
        return np.clip(a, -self.bound, self.bound)


@dataclass(frozen=True)
class DiscreteSpec:
    """Finite action set ``{0, ..., n - 1}``."""

    n: int


@dataclass
class StepOutcome:
    """Raw result of advancing the inner task by one step.

    ``success`` marks the step on which the victim's success predicate first
    fires; ``terminal`` and ``truncated`` are mutually exclusive, with
    truncation reserved for the horizon cutoff (value bootstrapping differs).
    ``dense_reward`` carries the shaped per-step signal where the environment
    defines one (zero otherwise).
    """

    state: np.ndarray
    success: bool
    terminal: bool
    truncated: bool
    dense_reward: float = 0.0


class EnvModel:
    """Base class for the single-agent episodic decision processes.

    Subclasses fill in ``_sample_initial`` and ``_advance`` and leave the
    bookkeeping (step counter, horizon truncation, terminal guard) here.
    """

    name: str = "env"
    state_dim: int
    action_spec: ContinuousSpec | DiscreteSpec
    horizon: int
    discount: float

    def __init__(self, horizon: int, discount: float):
        if horizon <= 0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        if not 0.0 <= discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {discount}")
        self.horizon = int(horizon)
        self.discount = float(discount)
        self._steps = 0
        self._done = True
        self._state: np.ndarray | None = None

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self._state = self._sample_initial(rng)
        self._steps = 0
        self._done = False
        return self._state.copy()

    @property
    def state(self) -> np.ndarray:
        if self._state is None:
            raise RuntimeError("reset() must be called before reading state")
        return self._state.copy()

    @property
    def done(self) -> bool:
        return self._done

    def step(self, action) -> StepOutcome:
        if self._done:
            raise EpisodeOver(f"{self.name}: step() after episode end")
        next_state, success, dense = self._advance(self._state, action)
        self._steps += 1
        terminal = bool(success)
        truncated = (not terminal) and self._steps >= self.horizon
        self._state = next_state
        self._done = terminal or truncated
        return StepOutcome(
            state=next_state.copy(),
            success=bool(success),
            terminal=terminal,
            truncated=truncated,
            dense_reward=float(dense),
        )

    def _sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, state, action):
        raise NotImplementedError


class GridChain(EnvModel):
    """Deterministic chain of ``n`` states with left/right moves.

    The agent starts at index 0 and succeeds on reaching index ``n - 1``.
    States are emitted as one-element float vectors so the same policy and
    buffer machinery applies; the integer index is recoverable exactly.
    Everything about this environment is enumerable, which makes it the exact
    oracle for the tabular visitation tests.
    """

    name = "gridchain"

    def __init__(self, n: int = 5, horizon: int | None = None, discount: float = 0.99):
        if n < 2:
            raise ValueError(f"gridchain needs at least 2 states, got {n}")
        super().__init__(horizon=horizon if horizon is not None else 4 * n, discount=discount)
        self.n = int(n)
        self.state_dim = 1
        self.action_spec = DiscreteSpec(2)

    def _sample_initial(self, rng):
        return np.zeros(1, dtype=np.float64)

    def _advance(self, state, action):
        a = int(action)
        if a not in (0, 1):
            raise ValueError(f"gridchain action must be 0 (left) or 1 (right), got {action}")
        i = int(state[0])
        j = max(i - 1, 0) if a == 0 else min(i + 1, self.n - 1)
        return np.array([float(j)]), j == self.n - 1, 0.0

    def transition_matrices(self) -> list[np.ndarray]:
        """Per-action transition matrices ``P[a][s, s']`` (rightmost state absorbing)."""
        mats = []
        for a in (0, 1):
            p = np.zeros((self.n, self.n))
            for s in range(self.n - 1):
                t = max(s - 1, 0) if a == 0 else min(s + 1, self.n - 1)
                p[s, t] = 1.0
            p[self.n - 1, self.n - 1] = 1.0
            mats.append(p)
        return mats

    def initial_distribution(self) -> np.ndarray:
        mu = np.zeros(self.n)
        mu[0] = 1.0
        return mu

    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.n - 1] = True
        return mask


class PointGoal(EnvModel):
    """2-D navigation: reach an axis-aligned goal box inside ``[-1, 1]^2``.

    The state is the agent's position, the action a velocity clamped to
    ``max_speed`` per coordinate. Success fires when the position comes
    within ``success_radius`` of the goal in max-norm. Starts are sampled
    uniformly, rejecting points closer than ``start_margin`` to the goal so
    no episode begins solved. The dense variant pays the per-step decrease
    in Euclidean distance to the goal.
    """

    name = "pointgoal"

    def __init__(
        self,
        horizon: int = 100,
        discount: float = 0.99,
        goal: tuple[float, float] = (0.6, 0.6),
        max_speed: float = 0.05,
        success_radius: float = 0.1,
        start_margin: float = 0.3,
        dense: bool = False,
    ):
        super().__init__(horizon=horizon, discount=discount)
        self.goal = np.asarray(goal, dtype=np.float64).reshape(2)
        if np.max(np.abs(self.goal)) > 1.0:
            raise ValueError(f"goal must lie inside the arena, got {goal}")
        if max_speed <= 0 or success_radius <= 0:
            raise ValueError("max_speed and success_radius must be positive")
        if start_margin <= success_radius:
            raise ValueError("start_margin must exceed success_radius")
        self.max_speed = float(max_speed)
        self.success_radius = float(success_radius)
        self.start_margin = float(start_margin)
        self.dense = bool(dense)
        self.state_dim = 2
        self.action_spec = ContinuousSpec(2, self.max_speed)

    def _sample_initial(self, rng):
        # Rejection sampling keeps mu seed-driven and never starts inside
        # (or adjacent to) the success box.
        for _ in range(1000):
            p = rng.uniform(-1.0, 1.0, size=2)
            if np.max(np.abs(p - self.goal)) >= self.start_margin:
                return p
        raise RuntimeError("start sampling failed; margin leaves no room")

    def _advance(self, state, action):
        v = self.action_spec.clamp(action)
        nxt = np.clip(state + v, -1.0, 1.0)
        success = np.max(np.abs(nxt - self.goal)) <= self.success_radius
        dense = 0.0
        if self.dense:
            dense = float(np.linalg.norm(state - self.goal) - np.linalg.norm(nxt - self.goal))
        return nxt, success, dense


class TwoPlayerEnv(EnvModel):
    """Base for two-player zero-sum tasks with a joint state.

    ``victim_dims`` and ``adversary_dims`` partition the joint state's
    coordinates; ``step`` takes both players' actions, applied simultaneously.
    """

    victim_dims: tuple[int, ...]
    adversary_dims: tuple[int, ...]
    victim_action_spec: ContinuousSpec | DiscreteSpec
    adversary_action_spec: ContinuousSpec | DiscreteSpec

    def step(self, victim_action, adversary_action) -> StepOutcome:  # type: ignore[override]
        if self._done:
            raise EpisodeOver(f"{self.name}: step() after episode end")
        next_state, success, dense = self._advance_joint(self._state, victim_action, adversary_action)
        self._steps += 1
        terminal = bool(success)
        truncated = (not terminal) and self._steps >= self.horizon
        self._state = next_state
        self._done = terminal or truncated
        return StepOutcome(next_state.copy(), bool(success), terminal, truncated, float(dense))

    def _advance_joint(self, state, victim_action, adversary_action):
        raise NotImplementedError


class GateRun(TwoPlayerEnv):
    """Two-player game: a runner must cross ``x >= gate_x`` before the horizon.

    The blocker freezes the runner for one step whenever their Euclidean
    distance is at most ``freeze_radius`` at the start of the step, which is
    its only mechanism for delaying the crossing. Both players move with
    max-norm bounded velocities; positions are kept inside a slightly padded
    arena so the joint state stays compact. Victim success is the crossing.

    Joint state layout: ``(runner_x, runner_y, blocker_x, blocker_y)``.
    """

    name = "gaterun"

    def __init__(
        self,
        horizon: int = 70,
        discount: float = 0.99,
        runner_speed: float = 0.05,
        blocker_speed: float = 0.08,
        freeze_radius: float = 0.15,
        gate_x: float = 1.0,
    ):
        super().__init__(horizon=horizon, discount=discount)
        if runner_speed <= 0 or blocker_speed <= 0 or freeze_radius <= 0:
            raise ValueError("speeds and freeze_radius must be positive")
        self.runner_speed = float(runner_speed)
        self.blocker_speed = float(blocker_speed)
        self.freeze_radius = float(freeze_radius)
        self.gate_x = float(gate_x)
        self.state_dim = 4
        self.victim_dims = (0, 1)
        self.adversary_dims = (2, 3)
        self.victim_action_spec = ContinuousSpec(2, self.runner_speed)
        self.adversary_action_spec = ContinuousSpec(2, self.blocker_speed)
        self.action_spec = self.adversary_action_spec

    def _sample_initial(self, rng):
        runner_y = rng.uniform(-0.2, 0.2)
        blocker_y = rng.uniform(-0.2, 0.2)
        return np.array([-1.0, runner_y, 0.0, blocker_y])

    def _advance_joint(self, state, victim_action, adversary_action):
        runner = state[:2]
        blocker = state[2:]
        rv = self.victim_action_spec.clamp(victim_action)
        bv = self.adversary_action_spec.clamp(adversary_action)
        if np.linalg.norm(runner - blocker) <= self.freeze_radius:
            rv = np.zeros(2)
        runner = runner + rv
        blocker = blocker + bv
        runner = np.clip(runner, (-1.2, -1.0), (1.2, 1.0))
        blocker = np.clip(blocker, (-1.2, -1.0), (1.2, 1.0))
        success = runner[0] >= self.gate_x
        return np.concatenate([runner, blocker]), success, 0.0


_CATALOG = {
    "gridchain": GridChain,
    "pointgoal": PointGoal,
    "gaterun": GateRun,
}


def built_in_environments() -> dict[str, type]:
    """Constructors for the built-in tasks, keyed by config name."""
    return dict(_CATALOG)


def make_env(name: str, **params) -> EnvModel:
    try:
        ctor = _CATALOG[name]
    except KeyError:
        known = ", ".join(sorted(_CATALOG))
        raise ValueError(f"unknown environment '{name}' (known: {known})") from None
    return ctor(**params)
