"""Frozen victim policies.

A victim is either a trained network acting deterministically (mean action /
argmax) or a scripted rule; both are immutable during an attack, which the
checksum makes checkable.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .nets import PolicyNetwork, load_checkpoint

__all__ = ["NetworkVictim", "ScriptedGateRunner", "load_victim"]


class NetworkVictim:
    """Deployed policy network; acts on its (possibly perturbed) observation."""

    frozen = True

    def __init__(self, net: PolicyNetwork, params: np.ndarray):
        self.net = net
        self.params = params.copy()
        self.observation_dim = net.input_dim

    def act(self, observation: np.ndarray):
        return self.net.mean_action(self.params, observation)

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.params).tobytes()).hexdigest()


class ScriptedGateRunner:
    """Greedy gate runner with an optional sidestep rule.

    Pushes toward the gate at full speed; when avoidance is on and the
    blocker sits close and not already behind, the runner trades forward
    speed for a lateral step away from the blocker's side. The naive variant
    (avoidance off) runs the straight line regardless, which a stationary
    blocker on the path defeats outright.
    """

    frozen = True

    def __init__(self, speed: float = 0.05, avoidance: bool = True, avoid_radius: float = 0.35):
        self.speed = float(speed)
        self.avoidance = bool(avoidance)
        self.avoid_radius = float(avoid_radius)
        self.observation_dim = 4

    def act(self, joint_state: np.ndarray) -> np.ndarray:
        rx, ry, bx, by = np.asarray(joint_state, dtype=np.float64).reshape(4)
        vx, vy = self.speed, 0.0
        if self.avoidance:
            dist = float(np.hypot(bx - rx, by - ry))
            if dist <= self.avoid_radius and bx >= rx - 0.05:
                side = 1.0 if ry >= by else -1.0
                vy = side * self.speed
                vx = 0.5 * self.speed
        elif abs(ry) > 1e-12:
            # Naive runner still recentres onto its straight line to the gate.
            vy = float(np.clip(-ry, -self.speed, self.speed))
        return np.array([vx, vy])

    def checksum(self) -> str:
        blob = f"gaterunner:{self.speed}:{self.avoidance}:{self.avoid_radius}".encode()
        return hashlib.sha256(blob).hexdigest()


def load_victim(checkpoint_path) -> NetworkVictim:
    net, params = load_checkpoint(checkpoint_path)
    return NetworkVictim(net, params)
