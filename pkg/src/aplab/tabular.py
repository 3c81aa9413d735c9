"""Exact tabular quantities for the chain environment.

The chain is small enough that any policy's discounted state-visitation
distribution is a linear solve. That closed form is the independent oracle
against which the Monte-Carlo rollouts and the analytic intrinsic-bonus
formulas are checked.
"""

from __future__ import annotations

import numpy as np

from .envs import GridChain

__all__ = [
    "policy_transition_matrix",
    "discounted_visitation",
    "mc_visitation",
]


def policy_transition_matrix(mats: list[np.ndarray], policy: np.ndarray) -> np.ndarray:
    """Collapse per-action matrices ``P[a][s, s']`` under ``policy[s, a]``."""
    policy = np.asarray(policy, dtype=np.float64)
    n = mats[0].shape[0]
    if policy.shape != (n, len(mats)):
        raise ValueError(f"policy shape {policy.shape} incompatible with {len(mats)} actions on {n} states")
    p = np.zeros((n, n))
    for a, mat in enumerate(mats):
        p += policy[:, a][:, None] * mat
    return p


def discounted_visitation(
    mats: list[np.ndarray],
    policy: np.ndarray,
    mu: np.ndarray,
    discount: float,
    terminal: np.ndarray | None = None,
) -> np.ndarray:
    """Discounted state-visitation distribution ``d(s) = (1-g) E[sum_t g^t 1(s_t=s)]``.

    Terminal states are counted on entry but emit no outflow, so episodes
    contribute ``s_0 ... s_T`` inclusive. Solves ``(I - g P^T) m = mu`` with
    the terminal rows of ``P`` zeroed and returns ``(1 - g) m``.
    """
    p = policy_transition_matrix(mats, policy)
    if terminal is not None:
        p = p.copy()
        p[np.asarray(terminal, dtype=bool)] = 0.0
    n = p.shape[0]
    m = np.linalg.solve(np.eye(n) - discount * p.T, np.asarray(mu, dtype=np.float64))
    return (1.0 - discount) * m


def mc_visitation(
    env: GridChain,
    policy: np.ndarray,
    episodes: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Monte-Carlo estimate of the discounted visitation with standard errors.

    Each episode contributes ``sum_t g^t onehot(s_t)`` including the terminal
    entry; the estimate is ``(1 - g)`` times the per-episode mean. Returns
    ``(estimate, standard_error, total_steps)``.
    """
    rng = np.random.default_rng(seed)
    g = env.discount
    per_episode = np.zeros((episodes, env.n))
    total_steps = 0
    for ep in range(episodes):
        state = env.reset(int(rng.integers(2**63)))
        acc = np.zeros(env.n)
        t = 0
        acc[int(state[0])] += 1.0
        while not env.done:
            s = int(env.state[0])
            a = int(rng.choice(2, p=policy[s]))
            out = env.step(a)
            t += 1
            total_steps += 1
            acc[int(out.state[0])] += g**t
        per_episode[ep] = acc
    mean = per_episode.mean(axis=0)
    sem = per_episode.std(axis=0, ddof=1) / np.sqrt(episodes)
    return (1.0 - g) * mean, (1.0 - g) * sem, total_steps
