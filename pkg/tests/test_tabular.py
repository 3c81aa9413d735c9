"""Exact tabular visitation vs Monte-Carlo rollouts on the chain."""

import numpy as np

from aplab.envs import GridChain
from aplab.tabular import discounted_visitation, mc_visitation, policy_transition_matrix


def chain_policy(n, right_prob):
    policy = np.empty((n, 2))
    policy[:, 1] = right_prob
    policy[:, 0] = 1.0 - right_prob
    return policy


class TestLinearSolve:
    def test_visitation_sums_near_one_without_absorption(self):
        # A chain whose terminal flag is ignored behaves like an ergodic walk;
        # the discounted visitation then sums to exactly one.
        env = GridChain(n=5, discount=0.9)
        policy = chain_policy(5, 0.5)
        d = discounted_visitation(env.transition_matrices(), policy, env.initial_distribution(), 0.9, terminal=None)
        assert abs(d.sum() - 1.0) < 1e-12

    def test_all_states_reachable_have_positive_mass(self):
        env = GridChain(n=5, discount=0.9)
        policy = chain_policy(5, 0.7)
        d = discounted_visitation(
            env.transition_matrices(), policy, env.initial_distribution(), 0.9, env.terminal_mask()
        )
        assert np.all(d > 0)

    def test_deterministic_right_policy_geometric_mass(self):
        # Always-right on the chain visits state t at time t, so the mass is
        # (1 - g) g^t, truncated by absorption at the last state.
        n, g = 4, 0.8
        env = GridChain(n=n, discount=g)
        policy = chain_policy(n, 1.0)
        d = discounted_visitation(env.transition_matrices(), policy, env.initial_distribution(), g, env.terminal_mask())
        expected = (1 - g) * np.array([1.0, g, g**2, g**3])
        np.testing.assert_allclose(d, expected, rtol=1e-12)


class TestMonteCarloAgreement:
    def test_mc_matches_linear_solve_within_3_sigma(self):
        # Spec-level oracle check: exact solve vs sampled visitation over
        # roughly 1e5 steps.
        g = 0.9
        env = GridChain(n=5, discount=g, horizon=200)
        policy = chain_policy(5, 0.6)
        exact = discounted_visitation(env.transition_matrices(), policy, env.initial_distribution(), g, env.terminal_mask())
        est, sem, total_steps = mc_visitation(env, policy, episodes=4000, seed=123)
        assert total_steps >= 1e5 * 0.2  # sanity on the sampling volume
        for s in range(5):
            assert abs(est[s] - exact[s]) <= 3.0 * max(sem[s], 1e-12), (
                f"state {s}: exact {exact[s]:.5f}, mc {est[s]:.5f} +- {sem[s]:.5f}"
            )
