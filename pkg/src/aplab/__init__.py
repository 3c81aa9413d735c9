"""Desk-scale laboratory for black-box adversarial-policy learning.

Train small PPO victims on built-in toy tasks, then learn observation- or
opponent-based attacks against them, with KNN-estimated intrinsic coverage
bonuses and an adaptive temperature controller balancing exploration against
the extrinsic attack objective.
"""

from .envs import GateRun, GridChain, PointGoal, built_in_environments, make_env
from .nets import PolicyNetwork, load_checkpoint, save_checkpoint
from .ppo import PpoConfig, RolloutBatch, gae, ppo_update
from .density import CoverBuffer, entropy_estimate, estimate_density
from .bonuses import RegularizerSpec
from .temperature import TemperatureController
from .threat import FixedVictimMdp, PerturbationMdp, Transition
from .harness import AttackSetup, evaluate, random_attack_baseline, run_attack, train_victim
from .config import ExperimentConfig, load_config, save_config

__version__ = "0.1.0"

__all__ = [
    "GateRun",
    "GridChain",
    "PointGoal",
    "built_in_environments",
    "make_env",
    "PolicyNetwork",
    "load_checkpoint",
    "save_checkpoint",
    "PpoConfig",
    "RolloutBatch",
    "gae",
    "ppo_update",
    "CoverBuffer",
    "entropy_estimate",
    "estimate_density",
    "RegularizerSpec",
    "TemperatureController",
    "FixedVictimMdp",
    "PerturbationMdp",
    "Transition",
    "AttackSetup",
    "evaluate",
    "random_attack_baseline",
    "run_attack",
    "train_victim",
    "ExperimentConfig",
    "load_config",
    "save_config",
]
