"""GAE and the clipped update: worked examples, reductions, contracts."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aplab.nets import Adam, PolicyNetwork, log_prob
from aplab.ppo import (
    EpisodeSpan,
    NumericalError,
    PpoConfig,
    RolloutBatch,
    batch_advantages,
    gae,
    normalize_stream,
    ppo_update,
)


class TestGae:
    def test_worked_example(self):
        # rewards [1, 0], values [0, 0, 0], gamma 0.5, lambda 1 -> [1, 0]
        adv = gae(np.array([1.0, 0.0]), np.zeros(3), 0.5, 1.0)
        np.testing.assert_allclose(adv, [1.0, 0.0], atol=1e-15)

    def test_all_zero_inputs(self):
        adv = gae(np.zeros(5), np.zeros(6), 0.9, 0.95)
        np.testing.assert_array_equal(adv, 0.0)

    def test_lambda_zero_is_one_step_td(self):
        rng = np.random.default_rng(4)
        rewards = rng.standard_normal(8)
        values = rng.standard_normal(9)
        adv = gae(rewards, values, 0.97, 0.0)
        deltas = rewards + 0.97 * values[1:] - values[:-1]
        np.testing.assert_allclose(adv, deltas, atol=1e-12)

    def test_lambda_one_is_discounted_return_minus_value(self):
        rng = np.random.default_rng(9)
        rewards = rng.standard_normal(6)
        values = np.append(rng.standard_normal(6), 0.0)  # terminal bootstrap
        adv = gae(rewards, values, 0.9, 1.0)
        for t in range(6):
            ret = sum(0.9**k * rewards[t + k] for k in range(6 - t))
            assert adv[t] == pytest.approx(ret - values[t], abs=1e-12)

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError, match="values must have"):
            gae(np.zeros(3), np.zeros(3), 0.9, 0.9)

    def test_no_leakage_across_episodes(self):
        # Two episodes; a huge reward in the second must not bleed into the first.
        rewards = np.array([0.0, 0.0, 100.0, 100.0])
        values = np.zeros(4)
        episodes = [EpisodeSpan(0, 2, True, np.zeros(1)), EpisodeSpan(2, 4, True, np.zeros(1))]
        adv, _ = batch_advantages(rewards, values, np.zeros(2), episodes, 0.99, 0.95)
        np.testing.assert_array_equal(adv[:2], 0.0)
        assert np.all(adv[2:] > 0)


class TestNormalization:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_normalized_stream_has_zero_mean_unit_std(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(256) * rng.uniform(0.5, 50)
        z = normalize_stream(x)
        assert abs(z.mean()) < 1e-6
        assert abs(z.std() - 1.0) < 1e-6


def make_batch(net, params, n, seed, env_dim=3):
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((n, env_dim))
    dist, v_ext, v_int, _ = net.forward(params, states)
    from aplab.nets import sample

    actions = sample(dist, rng)
    lp = log_prob(dist, actions)
    rewards = rng.standard_normal(n)
    bonuses = rng.standard_normal(n)
    episodes = [EpisodeSpan(0, n // 2, True, states[0]), EpisodeSpan(n // 2, n, False, states[-1])]
    batch = RolloutBatch(
        states=states,
        actions=actions,
        log_probs=lp,
        ext_rewards=rewards,
        episodes=episodes,
        episode_returns=[float(rewards[: n // 2].sum())],
        episode_start_states=np.repeat(states[:1], n, axis=0),
        int_bonuses=bonuses,
    )
    boots = np.array([0.0, float(v_ext[-1])])
    batch.adv_ext, batch.ret_ext = batch_advantages(rewards, v_ext, boots, episodes, 0.99, 0.95)
    batch.adv_int, batch.ret_int = batch_advantages(bonuses, v_int, np.zeros(2), episodes, 0.99, 0.95)
    return batch


class TestPpoUpdate:
    def setup_method(self):
        self.net = PolicyNetwork(3, 2, "gaussian", hidden=(8, 8))
        self.params = self.net.init_params(np.random.default_rng(0), log_std_init=-0.5)
        self.cfg = PpoConfig(epochs=4, minibatch_size=16, batch_steps=64)

    def test_update_improves_surrogate_on_its_own_batch(self):
        batch = make_batch(self.net, self.params, 64, seed=2)
        adv = normalize_stream(batch.adv_ext) + 1.0 * normalize_stream(batch.adv_int)

        def surrogate(params):
            dist, _, _, _ = self.net.forward(params, batch.states)
            lp = log_prob(dist, batch.actions)
            ratio = np.exp(lp - batch.log_probs)
            clipped = np.clip(ratio, 0.8, 1.2)
            return float(np.minimum(ratio * adv, clipped * adv).mean())

        before = surrogate(self.params)
        new_params, stats = ppo_update(
            self.net, self.params, Adam(self.net.n_params), batch, 1.0, self.cfg, np.random.default_rng(3)
        )
        assert surrogate(new_params) > before
        assert stats.updates == self.cfg.epochs * 4

    def test_min_contract_surrogate_lower_bounds_unclipped(self):
        # Per-sample: min(r A, clip(r) A) <= r A, for any batch.
        rng = np.random.default_rng(8)
        ratio = np.exp(rng.standard_normal(100))
        adv = rng.standard_normal(100)
        clipped = np.clip(ratio, 0.8, 1.2)
        surr = np.minimum(ratio * adv, clipped * adv)
        assert np.all(surr <= ratio * adv + 1e-15)

    def test_clip_function_value(self):
        assert float(np.clip(1.3, 1 - 0.2, 1 + 0.2)) == pytest.approx(1.2)

    def test_temperature_zero_rejected_when_intrinsic_active(self):
        batch = make_batch(self.net, self.params, 64, seed=2)
        with pytest.raises(ValueError, match="temperature"):
            ppo_update(
                self.net, self.params, Adam(self.net.n_params), batch, 0.0, self.cfg, np.random.default_rng(3)
            )

    def test_pure_extrinsic_path_ignores_intrinsic_fields(self):
        batch = make_batch(self.net, self.params, 64, seed=2)
        batch_no_int = make_batch(self.net, self.params, 64, seed=2)
        batch_no_int.int_bonuses = None
        batch_no_int.adv_int = None
        batch_no_int.ret_int = None
        p1, _ = ppo_update(
            self.net, self.params, Adam(self.net.n_params), batch, 1.0, self.cfg,
            np.random.default_rng(3), include_intrinsic=False,
        )
        p2, _ = ppo_update(
            self.net, self.params, Adam(self.net.n_params), batch_no_int, 1.0, self.cfg,
            np.random.default_rng(3), include_intrinsic=False,
        )
        np.testing.assert_array_equal(p1, p2)

    def test_nan_loss_aborts_with_diagnostic(self):
        batch = make_batch(self.net, self.params, 64, seed=2)
        batch.adv_ext[:] = np.nan
        with pytest.raises(NumericalError, match="non-finite"):
            ppo_update(self.net, self.params, Adam(self.net.n_params), batch, 1.0, self.cfg, np.random.default_rng(3))

    def test_config_validation(self):
        with pytest.raises(ValueError, match="clip_ratio"):
            PpoConfig(clip_ratio=1.5).validate()
        with pytest.raises(ValueError, match="gae_lambda"):
            PpoConfig(gae_lambda=-0.1).validate()
        PpoConfig().validate()
