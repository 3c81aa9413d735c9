"""Adaptive weight on the intrinsic advantage stream.

A nonnegative multiplier rises by dual ascent whenever the extrinsic attack
objective deteriorates between iterations and relaxes (clamped at zero) when
it improves; the temperature applied to the intrinsic stream is
``1 / (1 + multiplier)``, so training starts fully exploratory and shifts
weight onto the extrinsic objective as soon as progress stalls.
"""

from __future__ import annotations

import math

__all__ = ["TemperatureController"]


class TemperatureController:
    """Lagrangian-style controller for the intrinsic temperature.

    When disabled it reports the configured constant temperature and ignores
    updates. The first ``update`` call only records the reference objective;
    multiplier movement needs two consecutive batch estimates.
    """

    def __init__(self, step_size: float = 10.0, enabled: bool = True, constant: float = 1.0):
        if step_size <= 0:
            raise ValueError(f"step_size must be positive, got {step_size}")
        if not 0.0 < constant <= 1.0:
            raise ValueError(f"constant temperature must lie in (0, 1], got {constant}")
        self.step_size = float(step_size)
        self.enabled = bool(enabled)
        self.constant = float(constant)
        self.multiplier = 0.0
        self.reference: float | None = None

    @property
    def temperature(self) -> float:
        if not self.enabled:
            return self.constant
        return 1.0 / (1.0 + self.multiplier)

    def update(self, objective: float) -> tuple[float, float]:
        """Feed the latest batch estimate of the extrinsic attack objective.

        Returns the (multiplier, temperature) pair now in force.
        """
        if not self.enabled:
            return self.multiplier, self.temperature
        if not math.isfinite(objective):
            raise ValueError(f"objective estimate must be finite, got {objective}")
        if self.reference is None:
            self.reference = float(objective)
            return self.multiplier, self.temperature
        delta = float(objective) - self.reference
        self.multiplier = max(0.0, self.multiplier - self.step_size * delta)
        self.reference = float(objective)
        return self.multiplier, self.temperature
