"""End-to-end orchestration: rollout collection, victim training, the attack
loop (sampling stage + optimizing stage), and evaluation.

Everything is seed-driven through named, independent random streams derived
from the experiment seed, so a rerun with the same config reproduces the
whole run bit-exactly (single-collector mode is the only mode).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bonuses import (
    BonusNormalizer,
    MimicState,
    RegularizerSpec,
    divergence_bonus,
    policy_cover_bonus,
    record_snapshot,
    risk_bonus,
    state_coverage_bonus,
    update_mimic,
)
from .density import CoverBuffer, entropy_estimate
from .envs import ContinuousSpec, EnvModel
from .nets import Adam, PolicyNetwork
from .ppo import EpisodeSpan, PpoConfig, RolloutBatch, batch_advantages, ppo_update
from .temperature import TemperatureController
from .threat import FixedVictimMdp, PerturbationMdp

__all__ = [
    "derive_streams",
    "RolloutCarry",
    "collect_batch",
    "PolicyActor",
    "UniformActor",
    "ZeroActor",
    "EvalResult",
    "evaluate",
    "random_attack_baseline",
    "victim_success_rate",
    "VictimTrainTask",
    "TrainSummary",
    "train_victim",
    "IterationRecord",
    "AttackReport",
    "run_attack",
]

STREAM_NAMES = ("policy_init", "collect", "minibatch", "mimic", "proxy", "eval", "baseline", "buffer")
ENTROPY_PROXY_CAP = 4096
SUCCESS_BONUS = 2.0


def derive_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    """Independent named seed sequences for every stochastic concern."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return dict(zip(STREAM_NAMES, children))


def _seed_from(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# Rollout collection


@dataclass
class RolloutCarry:
    """Episode state threaded across batch boundaries."""

    active: bool = False
    current_state: np.ndarray | None = None
    start_state: np.ndarray | None = None
    ext_return: float = 0.0


def collect_batch(
    env,
    net: PolicyNetwork,
    params: np.ndarray,
    steps: int,
    rng: np.random.Generator,
    carry: RolloutCarry,
) -> RolloutBatch:
    """Collect exactly ``steps`` transitions with the stochastic policy.

    Episodes span batch boundaries; the trailing open episode is closed as a
    cut (bootstrapped like a truncation) and resumes in the next batch.
    """
    states = np.empty((steps, env.state_dim))
    start_states = np.empty((steps, env.state_dim))
    log_probs = np.empty(steps)
    rewards = np.empty(steps)
    actions: list = []
    spans: list[EpisodeSpan] = []
    episode_returns: list[float] = []
    span_start = 0

    for i in range(steps):
        if not carry.active:
            seed = int(rng.integers(2**63))
            carry.current_state = env.reset(seed)
            carry.start_state = carry.current_state.copy()
            carry.ext_return = 0.0
            carry.active = True
        state = carry.current_state
        action, lp = net.sample_action(params, state, rng)
        tr = env.step(action)
        states[i] = state
        start_states[i] = carry.start_state
        actions.append(action)
        log_probs[i] = lp
        rewards[i] = tr.ext_reward
        carry.ext_return += tr.ext_reward
        if tr.terminal or tr.truncated:
            spans.append(EpisodeSpan(span_start, i + 1, tr.terminal, tr.next_state.copy()))
            episode_returns.append(carry.ext_return)
            span_start = i + 1
            carry.active = False
            carry.current_state = None
        else:
            carry.current_state = tr.next_state
    if span_start < steps:
        spans.append(EpisodeSpan(span_start, steps, False, carry.current_state.copy(), completed=False))

    action_arr = np.asarray(actions)
    return RolloutBatch(
        states=states,
        actions=action_arr,
        log_probs=log_probs,
        ext_rewards=rewards,
        episodes=spans,
        episode_returns=episode_returns,
        episode_start_states=start_states,
    )


# ---------------------------------------------------------------------------
# Actors and evaluation


class PolicyActor:
    """Adversary backed by a policy network (stochastic unless told otherwise)."""

    def __init__(self, net: PolicyNetwork, params: np.ndarray, deterministic: bool = False):
        self.net = net
        self.params = params
        self.deterministic = deterministic

    def act(self, state, rng):
        if self.deterministic:
            return self.net.mean_action(self.params, state)
        action, _ = self.net.sample_action(self.params, state, rng)
        return action


class UniformActor:
    """Uniform random actions inside the box action space."""

    def __init__(self, spec: ContinuousSpec):
        self.spec = spec

    def act(self, state, rng):
        return rng.uniform(-self.spec.bound, self.spec.bound, self.spec.dim)


class ZeroActor:
    def __init__(self, dim: int):
        self.dim = dim

    def act(self, state, rng):
        return np.zeros(self.dim)


@dataclass
class EvalResult:
    """Attack evaluation over seeded episodes.

    ``asr`` is derived as ``1 + mean_adv_return`` so the metric identity
    holds exactly in floating point, not just in exact arithmetic.
    """

    episodes: int
    successes: int
    mean_victim_reward: float
    std_victim_reward: float
    mean_adv_return: float
    asr: float


def evaluate(adv_env, actor, episodes: int, seed_seq: np.random.SeedSequence) -> EvalResult:
    """Run seeded episodes of the adversary against the frozen victim.

    The victim's reward is the environment's true per-episode reward: the
    success indicator for sparse tasks, the dense return for dense variants.
    """
    if episodes < 1:
        raise ValueError(f"evaluation needs at least one episode, got {episodes}")
    rng = np.random.default_rng(seed_seq)
    dense = bool(getattr(adv_env.env, "dense", False))
    victim_rewards = np.empty(episodes)
    successes = 0
    for ep in range(episodes):
        state = adv_env.reset(int(rng.integers(2**63)))
        succeeded = False
        dense_return = 0.0
        while not adv_env.done:
            tr = adv_env.step(actor.act(state, rng))
            state = tr.next_state
            succeeded = succeeded or tr.victim_succeeded
            dense_return += -tr.ext_reward if dense else 0.0
        successes += int(succeeded)
        victim_rewards[ep] = dense_return if dense else float(succeeded)
    mean_adv_return = -(successes / episodes)
    return EvalResult(
        episodes=episodes,
        successes=successes,
        mean_victim_reward=float(victim_rewards.mean()),
        std_victim_reward=float(victim_rewards.std()),
        mean_adv_return=mean_adv_return,
        asr=1.0 + mean_adv_return,
    )


def random_attack_baseline(adv_env, episodes: int, seed_seq: np.random.SeedSequence) -> EvalResult:
    """Uniform perturbations from the max-norm budget ball, same metrics."""
    if not isinstance(adv_env, PerturbationMdp):
        raise ValueError("the random-perturbation baseline applies to the single-agent threat model")
    return evaluate(adv_env, UniformActor(adv_env.action_spec), episodes, seed_seq)


def victim_success_rate(env: EnvModel, victim, episodes: int, seed_seq: np.random.SeedSequence) -> float:
    """Fraction of unattacked episodes in which the deterministic victim succeeds."""
    rng = np.random.default_rng(seed_seq)
    successes = 0
    for _ in range(episodes):
        state = env.reset(int(rng.integers(2**63)))
        while not env.done:
            out = env.step(victim.act(state))
            state = out.state
            if out.success:
                successes += 1
                break
    return successes / episodes


# ---------------------------------------------------------------------------
# Victim training


class VictimTrainTask:
    """Adapter presenting a raw environment as the victim's own training task.

    Rewards are the dense per-step signal plus a terminal success bonus where
    the environment defines one, else the bare success indicator.
    """

    def __init__(self, env: EnvModel, success_bonus: float = SUCCESS_BONUS):
        self.env = env
        self.success_bonus = success_bonus
        self.state_dim = env.state_dim
        self.action_spec = env.action_spec
        self.horizon = env.horizon
        self.discount = env.discount

    def reset(self, seed: int):
        return self.env.reset(seed)

    @property
    def done(self) -> bool:
        return self.env.done

    def step(self, action):
        from .threat import Transition

        state = self.env.state
        out = self.env.step(action)
        if getattr(self.env, "dense", False):
            reward = out.dense_reward + (self.success_bonus if out.success else 0.0)
        else:
            reward = 1.0 if out.success else 0.0
        return Transition(
            state=state,
            action=action,
            applied_action=action,
            ext_reward=reward,
            next_state=out.state,
            terminal=out.terminal,
            truncated=out.truncated,
            log_prob=0.0,
            victim_succeeded=out.success,
        )


@dataclass
class TrainSummary:
    steps: int
    iterations: int
    success_rate: float
    warning: str | None = None


def train_victim(
    env: EnvModel,
    ppo_cfg: PpoConfig,
    seed: int,
    budget: int,
    log_std_init: float | None = None,
    eval_episodes: int = 100,
) -> tuple[PolicyNetwork, np.ndarray, TrainSummary]:
    """Plain PPO on the environment's own reward; returns the frozen policy.

    A zero budget returns the freshly initialised policy unchanged. If no
    training episode ever succeeds the summary carries a warning, but the
    policy is still returned (and should still be saved).
    """
    from .victims import NetworkVictim

    ppo_cfg.validate()
    streams = derive_streams(seed)
    head_kind = "gaussian" if isinstance(env.action_spec, ContinuousSpec) else "categorical"
    action_dim = env.action_spec.dim if isinstance(env.action_spec, ContinuousSpec) else env.action_spec.n
    if log_std_init is None and head_kind == "gaussian":
        log_std_init = float(np.log(env.action_spec.bound))
    net = PolicyNetwork(env.state_dim, action_dim, head_kind)
    params = net.init_params(np.random.default_rng(streams["policy_init"]), log_std_init=log_std_init or 0.0)
    adam = Adam(net.n_params)
    task = VictimTrainTask(env)
    carry = RolloutCarry()
    collect_rng = np.random.default_rng(streams["collect"])
    minibatch_rng = np.random.default_rng(streams["minibatch"])

    t = 0
    iterations = 0
    any_success = False
    while t < budget:
        batch = collect_batch(task, net, params, ppo_cfg.batch_steps, collect_rng, carry)
        t += len(batch)
        any_success = any_success or any(r > 0 for r in batch.episode_returns)
        v_ext, _ = net.values(params, batch.states)
        boots = _bootstrap_values(net, params, batch.episodes, which="ext")
        batch.adv_ext, batch.ret_ext = batch_advantages(
            batch.ext_rewards, v_ext, boots, batch.episodes, ppo_cfg.discount, ppo_cfg.gae_lambda
        )
        params, _ = ppo_update(net, params, adam, batch, 1.0, ppo_cfg, minibatch_rng, include_intrinsic=False)
        iterations += 1

    victim = NetworkVictim(net, params)
    rate = victim_success_rate(env, victim, eval_episodes, streams["eval"])
    warning = None
    if budget > 0 and not any_success:
        warning = "budget exhausted without a single successful training episode"
    return net, params, TrainSummary(steps=t, iterations=iterations, success_rate=rate, warning=warning)


def _bootstrap_values(net, params, episodes: list[EpisodeSpan], which: str = "both"):
    """Bootstrap values past each episode end: zero at terminal, predicted else."""
    tails = np.array([not ep.terminal for ep in episodes])
    boots_ext = np.zeros(len(episodes))
    boots_int = np.zeros(len(episodes))
    if tails.any():
        tail_states = np.stack([ep.final_next_state for ep in episodes if not ep.terminal])
        v_e, v_i = net.values(params, tail_states)
        boots_ext[tails] = v_e
        boots_int[tails] = v_i
    if which == "ext":
        return boots_ext
    return boots_ext, boots_int


# ---------------------------------------------------------------------------
# The attack loop


@dataclass
class IterationRecord:
    iteration: int
    samples: int
    mean_ext_return: float
    mean_int_return: float
    tau: float
    multiplier: float
    entropy_proxy: float
    wall_seconds: float
    asr_eval: float | None = None


@dataclass
class AttackReport:
    iterations: int = 0
    samples: int = 0
    records: list[IterationRecord] = field(default_factory=list)
    final: EvalResult | None = None
    victim_checksum: str = ""
    aborted: bool = False


@dataclass
class AttackSetup:
    """Everything run_attack needs, assembled by the config layer."""

    adv_env: PerturbationMdp | FixedVictimMdp
    regularizer: RegularizerSpec
    ppo: PpoConfig
    controller: TemperatureController
    cover_normalize: bool = True
    cover_capacity: int | None = None
    total_steps: int = 1_000_000
    eval_episodes: int = 300
    eval_interval: int = 0
    seed: int = 0
    log_std_init: float | None = None


def _entropy_proxy(cover: CoverBuffer, k: int, rng: np.random.Generator) -> float:
    """Proxy over the union buffer; subsampled above a cap to stay cheap."""
    n = len(cover)
    if n < k + 1:
        return float("nan")
    if n <= ENTROPY_PROXY_CAP:
        return entropy_estimate(cover, k)
    idx = rng.choice(n, size=ENTROPY_PROXY_CAP, replace=False)
    sub = CoverBuffer(cover.dim, normalize=cover.normalize)
    sub.insert(cover.states[idx], iteration=0)
    return entropy_estimate(sub, k)


def run_attack(setup: AttackSetup, writer=None) -> AttackReport:
    """Run the full attack: sample, estimate bonuses, update, balance, evaluate.

    On any error the partial report (all finished iterations) is flushed to
    the writer before the exception propagates.
    """
    setup.ppo.validate()
    setup.regularizer.validate()
    kind = setup.regularizer.kind
    env = setup.adv_env
    streams = derive_streams(setup.seed)

    if not isinstance(env.action_spec, ContinuousSpec):
        raise ValueError("the adversary's action space must be continuous")
    log_std_init = setup.log_std_init
    if log_std_init is None:
        log_std_init = float(np.log(env.action_spec.bound)) if env.action_spec.bound > 0 else 0.0
    net = PolicyNetwork(env.state_dim, env.action_spec.dim, "gaussian")
    params = net.init_params(np.random.default_rng(streams["policy_init"]), log_std_init=log_std_init)
    adam = Adam(net.n_params)

    checksum_before = env.victim.checksum()
    cover = CoverBuffer(
        env.state_dim,
        normalize=setup.cover_normalize,
        capacity=setup.cover_capacity,
        seed=_seed_from(streams["buffer"]),
    )
    normalizer = BonusNormalizer(setup.regularizer.normalize_bonuses)
    mimic = None
    if kind == "d":
        mimic = MimicState.create(net, params, _seed_from(streams["mimic"]))
    projections = None
    if isinstance(env, FixedVictimMdp):
        projections = (env.victim_dims, env.adversary_dims)

    collect_rng = np.random.default_rng(streams["collect"])
    minibatch_rng = np.random.default_rng(streams["minibatch"])
    proxy_rng = np.random.default_rng(streams["proxy"])
    carry = RolloutCarry()
    report = AttackReport()
    t = 0
    k = 0
    last_j_ap = 0.0

    try:
        while t < setup.total_steps:
            tic = time.perf_counter()
            tau = setup.controller.temperature
            multiplier = setup.controller.multiplier if setup.controller.enabled else 0.0

            # Sampling stage.
            batch = collect_batch(env, net, params, setup.ppo.batch_steps, collect_rng, carry)
            slots = cover.insert(batch.states, iteration=k)
            t += len(batch)

            # Optimizing stage: intrinsic bonuses are the gradient of the
            # chosen coverage objective at the current visitation estimate.
            if kind == "none":
                batch.int_bonuses = np.zeros(len(batch))
            else:
                if kind == "sc":
                    bonuses = state_coverage_bonus(
                        batch.states, setup.regularizer, normalize=setup.cover_normalize, projections=projections
                    )
                elif kind == "pc":
                    bonuses = policy_cover_bonus(batch.states, cover, slots, setup.regularizer, projections)
                elif kind == "r":
                    targets = setup.regularizer.target_state
                    if targets is None:
                        targets = batch.episode_start_states[:, env.victim_dims]
                    bonuses = risk_bonus(batch.states, targets, victim_dims=env.victim_dims)
                else:  # "d"
                    bonuses = divergence_bonus(batch.states, net, params, mimic.params)
                batch.int_bonuses = normalizer.apply(bonuses)

            v_ext, v_int = net.values(params, batch.states)
            boots_ext, boots_int = _bootstrap_values(net, params, batch.episodes)
            batch.adv_ext, batch.ret_ext = batch_advantages(
                batch.ext_rewards, v_ext, boots_ext, batch.episodes, setup.ppo.discount, setup.ppo.gae_lambda
            )
            include_intrinsic = kind != "none"
            if include_intrinsic:
                batch.adv_int, batch.ret_int = batch_advantages(
                    batch.int_bonuses, v_int, boots_int, batch.episodes, setup.ppo.discount, setup.ppo.gae_lambda
                )

            old_params = params
            params, _ = ppo_update(
                net, params, adam, batch, tau, setup.ppo, minibatch_rng, include_intrinsic=include_intrinsic
            )

            if kind == "d":
                record_snapshot(mimic, old_params, iteration=k)
                update_mimic(mimic, cover)

            if batch.episode_returns:
                last_j_ap = float(np.mean(batch.episode_returns))
            if setup.controller.enabled:
                setup.controller.update(last_j_ap)

            mean_int = _mean_episode_intrinsic(batch)
            proxy = _entropy_proxy(cover, setup.regularizer.k_neighbors, proxy_rng)

            asr_eval = None
            if setup.eval_interval and (k + 1) % setup.eval_interval == 0:
                actor = PolicyActor(net, params)
                asr_eval = evaluate(env, actor, setup.eval_episodes, streams["eval"].spawn(1)[0]).asr
                carry = RolloutCarry()  # evaluation consumed the env episode state

            record = IterationRecord(
                iteration=k,
                samples=t,
                mean_ext_return=last_j_ap,
                mean_int_return=mean_int,
                tau=tau,
                multiplier=multiplier,
                entropy_proxy=proxy,
                wall_seconds=time.perf_counter() - tic,
                asr_eval=asr_eval,
            )
            report.records.append(record)
            if writer is not None:
                writer.append_metrics(record)
            k += 1
    except Exception:
        report.aborted = True
        report.iterations = k
        report.samples = t
        if writer is not None:
            writer.flush_partial(report)
        raise

    report.iterations = k
    report.samples = t
    actor = PolicyActor(net, params)
    report.final = evaluate(env, actor, setup.eval_episodes, streams["eval"].spawn(1)[0])
    checksum_after = env.victim.checksum()
    if checksum_after != checksum_before:
        raise RuntimeError("victim parameters changed during the attack run")
    report.victim_checksum = checksum_after
    if writer is not None:
        writer.finish(report, net, params)
    return report


def _mean_episode_intrinsic(batch: RolloutBatch) -> float:
    """Mean per-episode intrinsic return over episodes completed in the batch."""
    if batch.int_bonuses is None:
        return 0.0
    totals = [float(batch.int_bonuses[ep.start : ep.end].sum()) for ep in batch.episodes if ep.completed]
    return float(np.mean(totals)) if totals else 0.0
