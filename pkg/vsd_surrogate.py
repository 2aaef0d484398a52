"""
VSD SURROGATE
Moment-matched Gaussian denoiser refit on the current renders, standing in for the
concurrently trained LoRA model of variational score distillation
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Protocol, Sequence

import numpy as np

from diffusion_schedule import DiffusionSchedule, schedule_at
from errors import DomainError, SurrogateStateError, UnknownPromptError
from mixture_world import GaussianComponent

logger = logging.getLogger(__name__)


class Denoiser(Protocol):
    """Anything that predicts the noise of x_t for a prompt"""

    def eps(self, s: DiffusionSchedule, x_t: np.ndarray, y: str, t: float) -> np.ndarray:
        ...


@dataclass(frozen=True, eq=False)
class VsdSurrogate:
    """Per-prompt Gaussian fit plus its refresh policy"""
    fits: Dict[str, GaussianComponent] = field(default_factory=dict)
    fit_window: int = 64
    refresh_every: int = 10
    variance_floor: float = 1e-4

    def __post_init__(self):
        if self.fit_window < 1 or self.refresh_every < 1:
            raise DomainError("fit_window and refresh_every must be positive")
        if self.variance_floor <= 0:
            raise DomainError("variance_floor must be positive")

    def eps(self, s: DiffusionSchedule, x_t: np.ndarray, y: str, t: float) -> np.ndarray:
        return surrogate_eps(self, s, x_t, y, t)


def fit_surrogate(sur: VsdSurrogate, recent_renders: Sequence[np.ndarray], prompt: str) -> VsdSurrogate:
    """Refit the prompt's Gaussian to the sample moments of the render window."""
    renders = list(recent_renders)[-sur.fit_window:]
    if not renders:
        raise SurrogateStateError(f"cannot fit surrogate for {prompt!r}: render window is empty")
    batch = np.stack([np.asarray(r, dtype=float) for r in renders])
    mean = batch.mean(axis=0)
    var = np.maximum(batch.var(axis=0), sur.variance_floor)
    fits = dict(sur.fits)
    fits[prompt] = GaussianComponent(mean, var)
    logger.debug(f"Refit VSD surrogate for {prompt!r} on {len(renders)} renders: "
                 f"mean={mean.tolist()} var={var.tolist()}")
    return replace(sur, fits=fits)


def surrogate_eps(sur: VsdSurrogate, s: DiffusionSchedule, x_t: np.ndarray, y: str, t: float) -> np.ndarray:
    """Optimal denoiser of the fitted Gaussian: -sigma_t * score of N(alpha mean, alpha^2 var + sigma^2)."""
    fit: Optional[GaussianComponent] = sur.fits.get(y)
    if fit is None:
        raise UnknownPromptError(y)
    alpha, sigma = schedule_at(s, t)
    if sigma <= 0.0:
        raise DomainError(f"eps prediction undefined at sigma_t = 0 (t={t})")
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != fit.mean.shape[0]:
        raise DomainError(f"expected points of dimension {fit.mean.shape[0]}, got shape {x_t.shape}")
    diffused_var = alpha * alpha * fit.var + sigma * sigma
    return sigma * (x_t - alpha * fit.mean) / diffused_var
