"""Command-line entry points.

Subcommands::

    aplab victim-train    --config C [--seed N] [--out DIR] ...
    aplab attack          --config C [--seed N] [--regularizer K] [--br on|off] [--out DIR]
    aplab eval            --config C [--seed N] [--out DIR]
    aplab baseline-random --config C [--seed N] [--out DIR]

Overrides beat the config file; the fully-resolved config is written next to
the outputs. Exit status is 0 on success, nonzero with a one-line diagnostic
on failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bonuses import REGULARIZER_KINDS
from .config import (
    ConfigError,
    ExperimentConfig,
    build_adv_env,
    build_attack_setup,
    build_env,
    build_ppo_config,
    build_victim,
    config_to_dict,
    load_config,
)
from .harness import derive_streams, evaluate, random_attack_baseline, run_attack, train_victim, PolicyActor
from .nets import load_checkpoint
from .runio import RunWriter, eval_report_dict
from .threat import PerturbationMdp

__all__ = ["main", "cli_dispatch"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aplab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("victim-train", "train a victim policy on the raw environment and save its checkpoint"),
        ("attack", "train an adversarial policy against the frozen victim"),
        ("eval", "evaluate a saved adversary checkpoint against the victim"),
        ("baseline-random", "evaluate uniform random perturbations from the budget ball"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="path to the experiment config (YAML)")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument(
            "--regularizer",
            choices=REGULARIZER_KINDS,
            default=None,
            help="override regularizer.kind",
        )
        p.add_argument("--br", choices=("on", "off"), default=None, help="override balance.adaptive")
        p.add_argument("--out", default=None, help="override run.out_dir (the run directory)")
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed: must be a 64-bit unsigned integer, got {args.seed}")
        cfg.run.seed = args.seed
    if args.regularizer is not None:
        cfg.regularizer.kind = args.regularizer
    if args.br is not None:
        cfg.balance.adaptive = args.br == "on"
    if args.out is not None:
        cfg.run.out_dir = args.out
    return cfg


def _writer(cfg: ExperimentConfig) -> RunWriter:
    if cfg.run.out_dir is None:
        raise ConfigError("run.out_dir: an output directory is required (set it or pass --out)")
    writer = RunWriter(cfg.run.out_dir)
    writer.write_resolved_config(config_to_dict(cfg))
    return writer


def _cmd_victim_train(cfg: ExperimentConfig) -> int:
    writer = _writer(cfg)
    env = build_env(cfg, dense=cfg.environment.name == "pointgoal")
    net, params, summary = train_victim(
        env,
        build_ppo_config(cfg),
        seed=cfg.run.seed,
        budget=cfg.run.total_steps,
        log_std_init=cfg.policy.log_std_init,
    )
    path = writer.write_policy(net, params, "victim.ckpt")
    doc = {
        "steps": summary.steps,
        "iterations": summary.iterations,
        "success_rate": summary.success_rate,
        "checkpoint": str(path),
    }
    if summary.warning:
        doc["warning"] = summary.warning
    import yaml

    from .runio import atomic_write_text

    atomic_write_text(writer.out_dir / "report.yaml", yaml.safe_dump(doc, sort_keys=False))
    print(f"victim saved to {path} (success rate {summary.success_rate:.3f})")
    if summary.warning:
        print(f"warning: {summary.warning}", file=sys.stderr)
    return 0


def _cmd_attack(cfg: ExperimentConfig) -> int:
    writer = _writer(cfg)
    setup = build_attack_setup(cfg)
    report = run_attack(setup, writer)
    assert report.final is not None
    print(
        f"attack finished: {report.iterations} iterations, {report.samples} samples, "
        f"ASR {report.final.asr:.3f}, victim reward {report.final.mean_victim_reward:.3f}"
    )
    return 0


def _cmd_eval(cfg: ExperimentConfig) -> int:
    if cfg.adversary.checkpoint is None:
        raise ConfigError("adversary.checkpoint: eval needs a trained adversary checkpoint")
    adv_env = build_adv_env(cfg)
    net, params = load_checkpoint(cfg.adversary.checkpoint)
    if net.input_dim != adv_env.state_dim:
        raise ConfigError(
            f"adversary.checkpoint: adversary observes {net.input_dim} dims, environment emits {adv_env.state_dim}"
        )
    streams = derive_streams(cfg.run.seed)
    result = evaluate(adv_env, PolicyActor(net, params), cfg.run.eval_episodes, streams["eval"])
    _finish_eval(cfg, result, "eval")
    return 0


def _cmd_baseline(cfg: ExperimentConfig) -> int:
    adv_env = build_adv_env(cfg)
    if not isinstance(adv_env, PerturbationMdp):
        raise ConfigError("baseline-random applies to the single-agent (perturbation) threat model")
    streams = derive_streams(cfg.run.seed)
    result = random_attack_baseline(adv_env, cfg.run.eval_episodes, streams["baseline"])
    _finish_eval(cfg, result, "baseline-random")
    return 0


def _finish_eval(cfg: ExperimentConfig, result, label: str) -> None:
    doc = eval_report_dict(result)
    print(
        f"{label}: ASR {doc['asr']:.9g}, victim reward {doc['mean_victim_reward']:.9g} "
        f"+- {doc['std_victim_reward']:.9g} over {doc['episodes']} episodes"
    )
    if cfg.run.out_dir is not None:
        writer = _writer(cfg)
        writer.write_eval_report(result, label)


def cli_dispatch(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "victim-train":
            return _cmd_victim_train(cfg)
        if args.command == "attack":
            return _cmd_attack(cfg)
        if args.command == "eval":
            return _cmd_eval(cfg)
        return _cmd_baseline(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
