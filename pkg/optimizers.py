"""
OPTIMIZERS
Plain gradient descent and bias-corrected Adam over a flat numpy parameter vector
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import OptimizerKind
from errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """Optimizer choice and hyperparameters"""
    kind: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError(f"Adam betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if self.eps <= 0:
            raise ConfigurationError(f"Adam eps must be positive, got {self.eps}")


class GradientDescent:
    """theta <- theta - lr * g"""

    def __init__(self, config: OptimizerConfig):
        self.config = config

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.config.learning_rate * grad


class Adam:
    """
    Adaptive moment estimation

    m <- b1 m + (1 - b1) g
    v <- b2 v + (1 - b2) g^2
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.t = 0
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.config
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * grad * grad
        m_hat = self.m / (1.0 - cfg.beta1 ** self.t)
        v_hat = self.v / (1.0 - cfg.beta2 ** self.t)
        return theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


def build_optimizer(config: OptimizerConfig):
    """Fresh optimizer state for one run"""
    if config.kind is OptimizerKind.GD:
        return GradientDescent(config)
    return Adam(config)
