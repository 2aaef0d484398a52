"""
SCORE DISTILLATION LAB - Core Configuration
Ambient defaults, closed choices and logging for every experiment
"""

import os
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

# ============================================================================
# CLOSED CHOICES
# ============================================================================

class ScheduleKind(Enum):
    """Forward-diffusion noise schedules"""
    LINEAR_SIGMA = "linear_sigma"   # sigma_t = t
    COSINE_ALPHA = "cosine_alpha"   # alpha_t = cos(pi t / 2)


class GeneratorKind(Enum):
    """Parametric renderers g(theta; c)"""
    IDENTITY = "identity"
    AFFINE_MULTI_VIEW = "affine_multi_view"


class RuleKind(Enum):
    """Image-space gradient rules"""
    SDS = "sds"
    CSD = "csd"
    CSD_NEG = "csd_neg"
    CSD_EDIT = "csd_edit"
    VSD = "vsd"
    DDS = "dds"
    DDS_NO_CLS = "dds_no_cls"
    CSD_ONLY_FROM_DDS = "csd_only_from_dds"

    @property
    def needs_neg_prompt(self) -> bool:
        return self in (RuleKind.CSD_NEG, RuleKind.CSD_EDIT, RuleKind.DDS,
                        RuleKind.DDS_NO_CLS, RuleKind.CSD_ONLY_FROM_DDS)

    @property
    def needs_dds_reference(self) -> bool:
        return self in (RuleKind.DDS, RuleKind.DDS_NO_CLS, RuleKind.CSD_ONLY_FROM_DDS)


class WeightScheduleKind(Enum):
    """Progress-dependent weight for the negative classifier score"""
    CONSTANT = "constant"
    LINEAR_DECAY = "linear_decay"
    COSINE_DECAY = "cosine_decay"


class TimeWeighting(Enum):
    """w(t) prefactor applied to every rule total"""
    ONE = "one"
    SIGMA_SQ = "sigma_sq"


class OptimizerKind(Enum):
    GD = "gd"
    ADAM = "adam"


class ThetaInit(Enum):
    """Named initial parameter presets"""
    ZEROS = "zeros"
    UNCOND_MEAN = "uncond_mean"
    SAMPLE_FROM = "sample_from"


# ============================================================================
# LAB CONFIGURATION
# ============================================================================

@dataclass
class LabConfig:
    """Master configuration: defaults every experiment falls back to"""

    # Runtime
    log_level: str = os.getenv("SCORE_LAB_LOG_LEVEL", "INFO")
    output_root: Path = Path(os.getenv("SCORE_LAB_OUTPUT", "./runs"))
    max_workers: int = int(os.getenv("SCORE_LAB_MAX_WORKERS", "1"))
    show_progress: bool = False

    # Schedule
    t_min: float = 0.02
    t_max: float = 0.98

    # Guidance weights
    omega: float = 40.0
    omega1: float = 1.0
    omega2: float = 0.5

    # Optimizer
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8

    # VSD surrogate
    variance_floor: float = 1e-4
    vsd_fit_window: int = 64
    vsd_refresh_every: int = 10

    # Runs
    steps: int = 2000
    log_every: int = 10
    seed: int = 0

    def __post_init__(self):
        """Coerce env-provided fields and configure logging"""
        self.output_root = Path(self.output_root)
        self._setup_logging()

    def _setup_logging(self):
        """Configure structured logging"""
        logging.basicConfig(
            level=getattr(logging, self.log_level.upper(), logging.INFO),
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            force=True
        )

    def validate(self) -> bool:
        """Validate configuration, logging every violated constraint"""
        logger = logging.getLogger(__name__)
        ok = True
        if not 0.0 <= self.t_min < self.t_max <= 1.0:
            logger.error(f"Invalid timestep range [{self.t_min}, {self.t_max}]")
            ok = False
        if self.learning_rate <= 0:
            logger.error(f"learning_rate must be positive, got {self.learning_rate}")
            ok = False
        if self.max_workers < 1:
            logger.error(f"max_workers must be >= 1, got {self.max_workers}")
            ok = False
        if self.variance_floor <= 0:
            logger.error(f"variance_floor must be positive, got {self.variance_floor}")
            ok = False
        if not 0 <= self.seed < 2 ** 64:
            logger.error(f"seed must lie in [0, 2**64), got {self.seed}")
            ok = False
        return ok


_CONFIG: Optional[LabConfig] = None


def get_config() -> LabConfig:
    """Shared lab configuration, built on first use"""
    global _CONFIG
    if _CONFIG is None:
        _CONFIG = LabConfig()
    return _CONFIG


if __name__ == "__main__":
    config = get_config()
    print("=" * 70)
    print("SCORE DISTILLATION LAB - Configuration")
    print("=" * 70)
    for name, value in vars(config).items():
        print(f"  {name:20} | {value}")
    print(f"\nConfiguration Valid: {config.validate()}")
    print("=" * 70)
