"""Laser intensity envelopes and pulse sequencing.

Envelopes are picklable callables mapping time [s] to a dimensionless
amplitude scale in [0, 1], so pulse configurations can cross process
boundaries for parallel runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

# 10-90 rise of an erf profile spans 2*z90 standard deviations.
_Z90 = 1.2815515655446004


@dataclass(frozen=True)
class ConstantEnvelope:
    value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ConfigError(f"envelope value {self.value} outside [0, 1]")

    def __call__(self, t):
        return self.value


@dataclass(frozen=True)
class ErfRamp:
    """Smooth switch-on: 0 -> 1 with a 10-90% rise time around t_on."""

    t_on: float
    rise_time: float = 90e-9

    def __post_init__(self):
        if self.rise_time <= 0:
            raise ConfigError("rise_time must be positive")

    @property
    def sigma(self):
        return self.rise_time / (2.0 * _Z90)

    def __call__(self, t):
        return 0.5 * (1.0 + math.erf((t - self.t_on) / (math.sqrt(2.0) * self.sigma)))


@dataclass(frozen=True)
class SquarePulse:
    t_on: float
    t_off: float

    def __post_init__(self):
        if self.t_off <= self.t_on:
            raise ConfigError("t_off must exceed t_on")

    def __call__(self, t):
        return 1.0 if self.t_on <= t < self.t_off else 0.0


@dataclass(frozen=True)
class Segment:
    """One stage of a driving sequence: which lasers act, for how long."""

    duration: float
    lasers: tuple = ()

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("segment duration must be positive")


@dataclass(frozen=True)
class PulseSequence:
    """Ordered driving segments plus the initial-state prescription.

    initial_state is either the string "d32_mixture" (equal populations in
    the four metastable sublevels, no coherences) or an explicit 8x8 matrix.
    """

    segments: tuple
    initial_state: object = "d32_mixture"

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("pulse sequence needs at least one segment")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_duration(self):
        return sum(seg.duration for seg in self.segments)
