"""Experiment configuration: a strict YAML key tree.

Unknown keys are rejected with their full path (silent typos are the dominant
failure mode in exploration experiments), every bound is checked at load
time, and the fully-resolved tree (defaults applied, overrides merged) round
trips losslessly through ``save_config``/``load_config``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from .bonuses import REGULARIZER_KINDS, RegularizerSpec
from .envs import EnvModel, GateRun, TwoPlayerEnv, make_env
from .harness import AttackSetup
from .ppo import PpoConfig
from .temperature import TemperatureController
from .threat import FixedVictimMdp, PerturbationMdp
from .victims import ScriptedGateRunner, load_victim

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "config_to_dict",
    "save_config",
    "build_env",
    "build_victim",
    "build_adv_env",
    "build_attack_setup",
]


class ConfigError(ValueError):
    """Configuration file problem; the message names the offending key."""


ENV_PARAM_DEFAULTS: dict[str, dict] = {
    "gridchain": {"n": 5},
    "pointgoal": {"goal": [0.6, 0.6], "max_speed": 0.05, "success_radius": 0.1, "start_margin": 0.3},
    "gaterun": {"runner_speed": 0.05, "blocker_speed": 0.08, "freeze_radius": 0.15, "gate_x": 1.0},
}

SCRIPTED_VICTIMS = ("gaterun-runner",)


@dataclass
class RunSection:
    seed: int = 0
    total_steps: int = 1_000_000
    eval_episodes: int = 300
    eval_interval: int = 0
    out_dir: str | None = None


@dataclass
class EnvironmentSection:
    name: str = "pointgoal"
    horizon: int | None = None
    discount: float = 0.99
    params: dict = field(default_factory=dict)


@dataclass
class ThreatSection:
    kind: str = "perturbation"
    epsilon: float = 0.05
    reward: str = "sparse"


@dataclass
class VictimSection:
    checkpoint: str | None = None
    scripted: str | None = None
    avoidance: bool = True


@dataclass
class RegularizerSection:
    kind: str = "sc"
    victim_weight: float = 0.5
    k_neighbors: int = 10
    c0: float = 1e-6
    normalize_bonuses: bool = True
    target_state: list | None = None


@dataclass
class CoverSection:
    normalize: bool = True
    capacity: int | None = None


@dataclass
class PpoSection:
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    normalize_advantages: bool = True
    batch_steps: int = 2048


@dataclass
class BalanceSection:
    adaptive: bool = True
    step_size: float = 10.0
    constant: float = 1.0


@dataclass
class PolicySection:
    log_std_init: float | None = None


@dataclass
class AdversarySection:
    checkpoint: str | None = None


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    threat: ThreatSection = field(default_factory=ThreatSection)
    victim: VictimSection = field(default_factory=VictimSection)
    regularizer: RegularizerSection = field(default_factory=RegularizerSection)
    cover: CoverSection = field(default_factory=CoverSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    balance: BalanceSection = field(default_factory=BalanceSection)
    policy: PolicySection = field(default_factory=PolicySection)
    adversary: AdversarySection = field(default_factory=AdversarySection)


# ---------------------------------------------------------------------------
# Parsing and validation


def _check_mapping(node, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _no_unknown(node: dict, allowed, path: str) -> None:
    for key in node:
        if key not in allowed:
            raise ConfigError(f"unknown key: {path}.{key}" if path else f"unknown key: {key}")


def _get(node: dict, key: str, default, path: str, kind, allow_none: bool = False):
    if key not in node or node[key] is None:
        if key in node and not allow_none and default is not None:
            raise ConfigError(f"{path}.{key}: null not allowed")
        return node.get(key, default)
    value = node[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
        value = float(value)
    elif kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected a boolean, got {value!r}")
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}.{key}: expected a string, got {value!r}")
    elif kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}.{key}: expected a list, got {value!r}")
    return value


def _bounded(value, lo, hi, path: str, lo_open: bool = False, hi_open: bool = False):
    bad = value < lo or value > hi or (lo_open and value == lo) or (hi_open and value == hi)
    if bad:
        lob = "(" if lo_open else "["
        hib = ")" if hi_open else "]"
        raise ConfigError(f"{path}: {value} outside {lob}{lo}, {hi}{hib}")
    return value


def parse_config(data: dict) -> ExperimentConfig:
    data = _check_mapping(data, "")
    _no_unknown(
        data,
        ("run", "environment", "threat", "victim", "regularizer", "cover", "ppo", "balance", "policy", "adversary"),
        "",
    )
    cfg = ExperimentConfig()

    node = _check_mapping(data.get("run"), "run")
    _no_unknown(node, ("seed", "total_steps", "eval_episodes", "eval_interval", "out_dir"), "run")
    cfg.run.seed = _get(node, "seed", 0, "run", int)
    if not 0 <= cfg.run.seed < 2**64:
        raise ConfigError(f"run.seed: must be a 64-bit unsigned integer, got {cfg.run.seed}")
    cfg.run.total_steps = _get(node, "total_steps", cfg.run.total_steps, "run", int)
    _bounded(cfg.run.total_steps, 1, 10**12, "run.total_steps")
    cfg.run.eval_episodes = _get(node, "eval_episodes", cfg.run.eval_episodes, "run", int)
    _bounded(cfg.run.eval_episodes, 1, 10**7, "run.eval_episodes")
    cfg.run.eval_interval = _get(node, "eval_interval", 0, "run", int)
    _bounded(cfg.run.eval_interval, 0, 10**9, "run.eval_interval")
    cfg.run.out_dir = _get(node, "out_dir", None, "run", str, allow_none=True)

    node = _check_mapping(data.get("environment"), "environment")
    _no_unknown(node, ("name", "horizon", "discount", "params"), "environment")
    cfg.environment.name = _get(node, "name", cfg.environment.name, "environment", str)
    if cfg.environment.name not in ENV_PARAM_DEFAULTS:
        known = ", ".join(sorted(ENV_PARAM_DEFAULTS))
        raise ConfigError(f"environment.name: unknown environment '{cfg.environment.name}' (known: {known})")
    cfg.environment.horizon = _get(node, "horizon", None, "environment", int, allow_none=True)
    if cfg.environment.horizon is not None:
        _bounded(cfg.environment.horizon, 1, 10**9, "environment.horizon")
    cfg.environment.discount = _get(node, "discount", cfg.environment.discount, "environment", float)
    _bounded(cfg.environment.discount, 0.0, 1.0, "environment.discount", hi_open=True)
    params = _check_mapping(node.get("params"), "environment.params")
    defaults = ENV_PARAM_DEFAULTS[cfg.environment.name]
    _no_unknown(params, tuple(defaults), "environment.params")
    merged = dict(defaults)
    merged.update(params)
    cfg.environment.params = merged

    node = _check_mapping(data.get("threat"), "threat")
    _no_unknown(node, ("kind", "epsilon", "reward"), "threat")
    cfg.threat.kind = _get(node, "kind", cfg.threat.kind, "threat", str)
    if cfg.threat.kind not in ("perturbation", "fixed-victim"):
        raise ConfigError(f"threat.kind: must be 'perturbation' or 'fixed-victim', got '{cfg.threat.kind}'")
    cfg.threat.epsilon = _get(node, "epsilon", cfg.threat.epsilon, "threat", float)
    _bounded(cfg.threat.epsilon, 0.0, 1e6, "threat.epsilon")
    cfg.threat.reward = _get(node, "reward", cfg.threat.reward, "threat", str)
    if cfg.threat.reward not in ("sparse", "dense"):
        raise ConfigError(f"threat.reward: must be 'sparse' or 'dense', got '{cfg.threat.reward}'")

    node = _check_mapping(data.get("victim"), "victim")
    _no_unknown(node, ("checkpoint", "scripted", "avoidance"), "victim")
    cfg.victim.checkpoint = _get(node, "checkpoint", None, "victim", str, allow_none=True)
    cfg.victim.scripted = _get(node, "scripted", None, "victim", str, allow_none=True)
    if cfg.victim.scripted is not None and cfg.victim.scripted not in SCRIPTED_VICTIMS:
        raise ConfigError(f"victim.scripted: unknown scripted victim '{cfg.victim.scripted}'")
    if cfg.victim.checkpoint is not None and cfg.victim.scripted is not None:
        raise ConfigError("victim: give either checkpoint or scripted, not both")
    cfg.victim.avoidance = _get(node, "avoidance", True, "victim", bool)

    node = _check_mapping(data.get("regularizer"), "regularizer")
    _no_unknown(node, ("kind", "victim_weight", "k_neighbors", "c0", "normalize_bonuses", "target_state"), "regularizer")
    cfg.regularizer.kind = _get(node, "kind", cfg.regularizer.kind, "regularizer", str)
    if cfg.regularizer.kind not in REGULARIZER_KINDS:
        raise ConfigError(
            f"regularizer.kind: unknown kind '{cfg.regularizer.kind}' (known: {', '.join(REGULARIZER_KINDS)})"
        )
    cfg.regularizer.victim_weight = _get(node, "victim_weight", 0.5, "regularizer", float)
    _bounded(cfg.regularizer.victim_weight, 0.0, 1.0, "regularizer.victim_weight")
    cfg.regularizer.k_neighbors = _get(node, "k_neighbors", 10, "regularizer", int)
    _bounded(cfg.regularizer.k_neighbors, 1, 10**6, "regularizer.k_neighbors")
    cfg.regularizer.c0 = _get(node, "c0", 1e-6, "regularizer", float)
    _bounded(cfg.regularizer.c0, 0.0, 1e3, "regularizer.c0", lo_open=True)
    cfg.regularizer.normalize_bonuses = _get(node, "normalize_bonuses", True, "regularizer", bool)
    target = _get(node, "target_state", None, "regularizer", list, allow_none=True)
    if target is not None:
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in target):
            raise ConfigError("regularizer.target_state: expected a list of numbers")
        target = [float(v) for v in target]
    cfg.regularizer.target_state = target

    node = _check_mapping(data.get("cover"), "cover")
    _no_unknown(node, ("normalize", "capacity"), "cover")
    cfg.cover.normalize = _get(node, "normalize", True, "cover", bool)
    cfg.cover.capacity = _get(node, "capacity", None, "cover", int, allow_none=True)
    if cfg.cover.capacity is not None:
        _bounded(cfg.cover.capacity, 1, 10**9, "cover.capacity")

    node = _check_mapping(data.get("ppo"), "ppo")
    allowed = (
        "clip_ratio",
        "gae_lambda",
        "epochs",
        "minibatch_size",
        "learning_rate",
        "value_coef",
        "entropy_coef",
        "normalize_advantages",
        "batch_steps",
    )
    _no_unknown(node, allowed, "ppo")
    p = cfg.ppo
    p.clip_ratio = _bounded(_get(node, "clip_ratio", p.clip_ratio, "ppo", float), 0.0, 1.0, "ppo.clip_ratio", True, True)
    p.gae_lambda = _bounded(_get(node, "gae_lambda", p.gae_lambda, "ppo", float), 0.0, 1.0, "ppo.gae_lambda")
    p.epochs = _bounded(_get(node, "epochs", p.epochs, "ppo", int), 1, 10**4, "ppo.epochs")
    p.minibatch_size = _bounded(_get(node, "minibatch_size", p.minibatch_size, "ppo", int), 1, 10**7, "ppo.minibatch_size")
    p.learning_rate = _bounded(_get(node, "learning_rate", p.learning_rate, "ppo", float), 0.0, 1e3, "ppo.learning_rate", True)
    p.value_coef = _bounded(_get(node, "value_coef", p.value_coef, "ppo", float), 0.0, 1e6, "ppo.value_coef")
    p.entropy_coef = _bounded(_get(node, "entropy_coef", p.entropy_coef, "ppo", float), 0.0, 1e6, "ppo.entropy_coef")
    p.normalize_advantages = _get(node, "normalize_advantages", True, "ppo", bool)
    p.batch_steps = _bounded(_get(node, "batch_steps", p.batch_steps, "ppo", int), 1, 10**8, "ppo.batch_steps")

    node = _check_mapping(data.get("balance"), "balance")
    _no_unknown(node, ("adaptive", "step_size", "constant"), "balance")
    cfg.balance.adaptive = _get(node, "adaptive", True, "balance", bool)
    cfg.balance.step_size = _bounded(_get(node, "step_size", 10.0, "balance", float), 0.0, 1e9, "balance.step_size", True)
    cfg.balance.constant = _bounded(_get(node, "constant", 1.0, "balance", float), 0.0, 1.0, "balance.constant", True)

    node = _check_mapping(data.get("policy"), "policy")
    _no_unknown(node, ("log_std_init",), "policy")
    cfg.policy.log_std_init = _get(node, "log_std_init", None, "policy", float, allow_none=True)
    if cfg.policy.log_std_init is not None:
        _bounded(cfg.policy.log_std_init, -5.0, 2.0, "policy.log_std_init")

    node = _check_mapping(data.get("adversary"), "adversary")
    _no_unknown(node, ("checkpoint",), "adversary")
    cfg.adversary.checkpoint = _get(node, "checkpoint", None, "adversary", str, allow_none=True)

    _check_compatibility(cfg)
    return cfg


def _check_compatibility(cfg: ExperimentConfig) -> None:
    two_player = cfg.environment.name == "gaterun"
    if cfg.threat.kind == "fixed-victim" and not two_player:
        raise ConfigError(f"threat.kind: fixed-victim needs a two-player environment, not '{cfg.environment.name}'")
    if cfg.threat.kind == "perturbation" and two_player:
        raise ConfigError("threat.kind: perturbation does not apply to the two-player environment")
    if cfg.threat.reward == "dense" and cfg.environment.name != "pointgoal":
        raise ConfigError("threat.reward: dense attack reward is only defined for pointgoal")
    if cfg.victim.scripted is not None and not two_player:
        raise ConfigError("victim.scripted: scripted victims exist only for gaterun")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(f"{where}: invalid YAML: {exc}") from None
    return parse_config(data if data is not None else {})


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def save_config(cfg: ExperimentConfig, path) -> None:
    import os

    text = yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Builders: config tree -> live objects


def build_env(cfg: ExperimentConfig, dense: bool = False) -> EnvModel:
    kwargs = dict(cfg.environment.params)
    if cfg.environment.name == "pointgoal":
        kwargs["goal"] = tuple(kwargs["goal"])
        if dense:
            kwargs["dense"] = True
    kwargs["discount"] = cfg.environment.discount
    if cfg.environment.horizon is not None:
        kwargs["horizon"] = cfg.environment.horizon
    return make_env(cfg.environment.name, **kwargs)


def build_victim(cfg: ExperimentConfig, env: EnvModel):
    if cfg.victim.scripted is not None:
        if not isinstance(env, GateRun):
            raise ConfigError("victim.scripted: gaterun-runner requires the gaterun environment")
        return ScriptedGateRunner(speed=env.runner_speed, avoidance=cfg.victim.avoidance)
    if cfg.victim.checkpoint is None:
        raise ConfigError("victim.checkpoint: a victim checkpoint (or scripted victim) is required")
    return load_victim(cfg.victim.checkpoint)


def build_adv_env(cfg: ExperimentConfig):
    dense = cfg.threat.reward == "dense"
    env = build_env(cfg, dense=dense)
    victim = build_victim(cfg, env)
    if cfg.threat.kind == "perturbation":
        return PerturbationMdp(env, victim, cfg.threat.epsilon, reward=cfg.threat.reward)
    if not isinstance(env, TwoPlayerEnv):
        raise ConfigError("threat.kind: fixed-victim needs a two-player environment")
    return FixedVictimMdp(env, victim)


def build_ppo_config(cfg: ExperimentConfig) -> PpoConfig:
    p = cfg.ppo
    ppo = PpoConfig(
        clip_ratio=p.clip_ratio,
        discount=cfg.environment.discount,
        gae_lambda=p.gae_lambda,
        epochs=p.epochs,
        minibatch_size=p.minibatch_size,
        learning_rate=p.learning_rate,
        value_coef=p.value_coef,
        entropy_coef=p.entropy_coef,
        normalize_advantages=p.normalize_advantages,
        batch_steps=p.batch_steps,
    )
    ppo.validate()
    return ppo


def build_attack_setup(cfg: ExperimentConfig) -> AttackSetup:
    adv_env = build_adv_env(cfg)
    reg = RegularizerSpec(
        kind=cfg.regularizer.kind,
        victim_weight=cfg.regularizer.victim_weight,
        k_neighbors=cfg.regularizer.k_neighbors,
        c0=cfg.regularizer.c0,
        normalize_bonuses=cfg.regularizer.normalize_bonuses,
        target_state=None if cfg.regularizer.target_state is None else np.asarray(cfg.regularizer.target_state),
    )
    reg.validate()
    controller = TemperatureController(
        step_size=cfg.balance.step_size,
        enabled=cfg.balance.adaptive,
        constant=cfg.balance.constant,
    )
    return AttackSetup(
        adv_env=adv_env,
        regularizer=reg,
        ppo=build_ppo_config(cfg),
        controller=controller,
        cover_normalize=cfg.cover.normalize,
        cover_capacity=cfg.cover.capacity,
        total_steps=cfg.run.total_steps,
        eval_episodes=cfg.run.eval_episodes,
        eval_interval=cfg.run.eval_interval,
        seed=cfg.run.seed,
        log_std_init=cfg.policy.log_std_init,
    )
