"""
DIFFUSION SCHEDULE
Variance-preserving forward process: x_t = alpha_t x + sigma_t eps with alpha_t^2 + sigma_t^2 = 1
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from config import ScheduleKind
from errors import DomainError


@dataclass(frozen=True)
class DiffusionSchedule:
    """Maps continuous time t in [0, 1] to (alpha_t, sigma_t)"""
    kind: ScheduleKind = ScheduleKind.LINEAR_SIGMA
    t_min: float = 0.02
    t_max: float = 0.98

    def __post_init__(self):
        if not (0.0 <= self.t_min <= self.t_max <= 1.0):
            raise DomainError(f"timestep range must satisfy 0 <= t_min <= t_max <= 1, "
                              f"got [{self.t_min}, {self.t_max}]")
        if self.t_max == 0.0:
            raise DomainError("timestep range [0, 0] keeps sigma at zero on every step; t_max must be positive")

    def at(self, t: float) -> Tuple[float, float]:
        return schedule_at(self, t)

    def alpha(self, t: float) -> float:
        return schedule_at(self, t)[0]

    def sigma(self, t: float) -> float:
        return schedule_at(self, t)[1]


def schedule_at(s: DiffusionSchedule, t: float) -> Tuple[float, float]:
    """Return (alpha_t, sigma_t)."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    if s.kind is ScheduleKind.LINEAR_SIGMA:
        sigma = float(t)
        # 1 - t^2 as (1 - t)(1 + t)
        alpha = math.sqrt((1.0 - sigma) * (1.0 + sigma))
        return alpha, sigma
    half_angle = 0.5 * math.pi * t
    return math.cos(half_angle), math.sin(half_angle)


def perturb(s: DiffusionSchedule, x: np.ndarray, t: float, eps: np.ndarray) -> np.ndarray:
    """Forward-diffuse x to time t with the given noise."""
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x.shape != eps.shape:
        raise DomainError(f"x and eps shapes differ: {x.shape} vs {eps.shape}")
    alpha, sigma = schedule_at(s, t)
    return alpha * x + sigma * eps


def sample_timestep(s: DiffusionSchedule, rng: np.random.Generator) -> float:
    """Draw t uniformly on (t_min, t_max]."""
    # exactly one draw per call, even when t_min == t_max
    u = rng.random()
    return float(s.t_max - (s.t_max - s.t_min) * u)
