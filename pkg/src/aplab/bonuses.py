"""Per-step adversarial intrinsic bonuses.

Each bonus is the gradient of its coverage/risk/divergence objective with
respect to the visitation distribution, evaluated on nonparametric density
estimates:

* state coverage:   ``-ln d(s) - 1`` with ``d`` estimated on the fresh buffer
* policy coverage:  ``-ln rho(s) - 1`` with ``rho`` estimated on the union buffer
* risk:             ``-||victim_proj(s) - target||`` (no buffer needed)
* divergence:       ``KL(adversary(.|s) || mimic(.|s))``

The ``-1`` constant is kept deliberately: the bonus is literally the gradient
of ``-sum d ln d``, and in episodic tasks a constant per-step offset changes
behaviour, so dropping it would change the objective. Under the two-player
threat model the coverage bonuses mix the adversary- and victim-projection
terms with weight ``victim_weight``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .density import DEFAULT_C0, CoverBuffer, estimate_density
from .nets import Adam, PolicyNetwork, kl_divergence

__all__ = [
    "REGULARIZER_KINDS",
    "RegularizerSpec",
    "BonusNormalizer",
    "state_coverage_bonus",
    "policy_cover_bonus",
    "risk_bonus",
    "divergence_bonus",
    "MimicState",
    "record_snapshot",
    "update_mimic",
]

REGULARIZER_KINDS = ("none", "sc", "pc", "r", "d")

MIMIC_STEPS = 5
MIMIC_SAMPLE = 512
MIMIC_LR = 1e-3
SNAPSHOT_CAP = 32


@dataclass
class RegularizerSpec:
    """Which intrinsic bonus to compute and with what knobs.

    ``victim_weight`` only applies under the two-player threat model, where
    the coverage bonuses are mixed across the state projections;
    ``target_state`` (risk kind) defaults to each episode's own initial
    victim state when left unset.
    """

    kind: str = "sc"
    victim_weight: float = 0.5
    k_neighbors: int = 10
    c0: float = DEFAULT_C0
    normalize_bonuses: bool = True
    target_state: np.ndarray | None = None

    def validate(self) -> None:
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r} (known: {', '.join(REGULARIZER_KINDS)})")
        if not 0.0 <= self.victim_weight <= 1.0:
            raise ValueError(f"victim_weight must lie in [0, 1], got {self.victim_weight}")
        if self.k_neighbors <= 0:
            raise ValueError("k_neighbors must be positive")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")


class BonusNormalizer:
    """Divide bonuses by a running scale (no centering).

    The scale is the root mean square of every bonus seen so far, so a
    constant stream maps to +-1 and relative structure is preserved. A small
    floor guards the all-zero stream.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = bool(enabled)
        self._sumsq = 0.0
        self._count = 0

    def apply(self, bonuses: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return bonuses
        self._sumsq += float((bonuses**2).sum())
        self._count += bonuses.size
        scale = np.sqrt(self._sumsq / self._count) if self._count else 0.0
        return bonuses / max(scale, 1e-8)


def _log_density_bonus(densities: np.ndarray) -> np.ndarray:
    # Gradient of the negative-entropy functional: d(-x ln x)/dx = -ln x - 1.
    return -np.log(densities) - 1.0


def _coverage_bonus(
    buffer: CoverBuffer,
    states: np.ndarray,
    spec: RegularizerSpec,
    exclude: np.ndarray | None,
    projections: tuple[np.ndarray, np.ndarray] | None,
) -> np.ndarray:
    if projections is None:
        est = estimate_density(buffer, states, spec.k_neighbors, spec.c0, exclude=exclude)
        return _log_density_bonus(est.densities)
    victim_dims, adversary_dims = projections
    xi = spec.victim_weight
    total = np.zeros(np.atleast_2d(states).shape[0])
    if xi < 1.0:
        est = estimate_density(buffer, states, spec.k_neighbors, spec.c0, exclude=exclude, dims=adversary_dims)
        total += (1.0 - xi) * _log_density_bonus(est.densities)
    if xi > 0.0:
        est = estimate_density(buffer, states, spec.k_neighbors, spec.c0, exclude=exclude, dims=victim_dims)
        total += xi * _log_density_bonus(est.densities)
    return total


def state_coverage_bonus(
    states: np.ndarray,
    spec: RegularizerSpec,
    normalize: bool = True,
    projections: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Bonus from the density of the current iteration's own states.

    Builds the fresh per-iteration buffer from the batch itself; every query
    is self-excluded by index.
    """
    block = np.atleast_2d(np.asarray(states, dtype=np.float64))
    fresh = CoverBuffer(block.shape[1], normalize=normalize)
    slots = fresh.insert(block, iteration=0)
    return _coverage_bonus(fresh, block, spec, slots, projections)


def policy_cover_bonus(
    states: np.ndarray,
    cover: CoverBuffer,
    slots: np.ndarray,
    spec: RegularizerSpec,
    projections: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Bonus from the density of the union buffer of all visited states.

    ``slots`` are the insertion indices the cover buffer returned for this
    batch, used for self-exclusion (-1 entries were reservoir-dropped and
    need none).
    """
    return _coverage_bonus(cover, states, spec, slots, projections)


def risk_bonus(
    states: np.ndarray,
    targets: np.ndarray,
    victim_dims: np.ndarray | None = None,
) -> np.ndarray:
    """Negative Euclidean distance from the victim projection to the lure target.

    ``targets`` is either a single vector or one row per state (the episode's
    own initial victim state under the default policy).
    """
    block = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if victim_dims is not None:
        block = block[:, np.asarray(victim_dims, dtype=np.int64)]
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[None, :]
    if targets.shape[-1] != block.shape[1]:
        raise ValueError(f"target dim {targets.shape[-1]} != victim state dim {block.shape[1]}")
    return -np.sqrt(((block - targets) ** 2).sum(axis=1))


def divergence_bonus(
    states: np.ndarray,
    net: PolicyNetwork,
    adversary_params: np.ndarray,
    mimic_params: np.ndarray,
) -> np.ndarray:
    """KL of the adversary's action distribution from the mimic's, per state."""
    dist_a, _, _, _ = net.forward(adversary_params, states)
    dist_m, _, _, _ = net.forward(mimic_params, states)
    return kl_divergence(dist_a, dist_m)


@dataclass
class MimicState:
    """Auxiliary policy imitating the adversary's past policies.

    Shares the adversary's architecture. ``snapshots`` keeps (iteration,
    parameters) pairs of past adversaries, thinned to ``SNAPSHOT_CAP`` while
    preserving temporal spread.
    """

    net: PolicyNetwork
    params: np.ndarray
    adam: Adam
    rng: np.random.Generator
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)

    @classmethod
    def create(cls, net: PolicyNetwork, params: np.ndarray, seed: int) -> "MimicState":
        return cls(
            net=net,
            params=params.copy(),
            adam=Adam(net.n_params),
            rng=np.random.default_rng(seed),
        )


def record_snapshot(mimic: MimicState, params: np.ndarray, iteration: int) -> None:
    mimic.snapshots.append((iteration, params.copy()))
    if len(mimic.snapshots) > SNAPSHOT_CAP:
        keep = np.unique(np.round(np.linspace(0, len(mimic.snapshots) - 1, SNAPSHOT_CAP)).astype(int))
        mimic.snapshots = [mimic.snapshots[i] for i in keep]


def update_mimic(
    mimic: MimicState,
    cover: CoverBuffer,
    steps: int = MIMIC_STEPS,
    sample_size: int = MIMIC_SAMPLE,
    lr: float = MIMIC_LR,
) -> list[float]:
    """Gradient steps minimising mean KL(mimic || snapshot) over buffer states.

    Returns the per-step loss curve. Zero steps leave the mimic untouched.
    """
    if not mimic.snapshots:
        raise ValueError("mimic update needs at least one recorded adversary snapshot")
    losses: list[float] = []
    n = len(cover)
    if n == 0:
        raise ValueError("cover buffer is empty")
    for _ in range(steps):
        idx = mimic.rng.integers(0, n, size=min(sample_size, n))
        states = cover.states[idx]
        targets = [mimic.net.forward(p, states)[0] for _, p in mimic.snapshots]
        loss, grad = mimic.net.mimic_kl_loss_and_grad(mimic.params, states, targets)
        mimic.params = mimic.adam.step(mimic.params, grad, lr)
        losses.append(loss)
    return losses
