"""
MIXTURE WORLD
Prompt-conditional Gaussian-mixture data distributions with exact diffused densities,
scores, noise predictors and the implicit classifier q(y | x_t)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from diffusion_schedule import DiffusionSchedule, schedule_at
from errors import DomainError, UnknownPromptError

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
_SUM_TOL = 1e-12


def _frozen(values, ndim: int) -> np.ndarray:
    try:
        arr = np.array(values, dtype=float, ndmin=ndim)
    except (TypeError, ValueError) as e:
        raise DomainError(f"expected a rectangular numeric array: {e}") from e
    arr.setflags(write=False)
    return arr


def _log_weights(weights: np.ndarray) -> np.ndarray:
    out = np.full(weights.shape, -np.inf)
    np.log(weights, out=out, where=weights > 0)
    return out


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """Diagonal Gaussian N(mean, diag(var))"""
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean, 1)
        var = _frozen(self.var, 1)
        if mean.shape != var.shape:
            raise DomainError(f"mean and var shapes differ: {mean.shape} vs {var.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise DomainError(f"component mean and var must be finite, got {mean.tolist()} and {var.tolist()}")
        if not np.all(var > 0):
            raise DomainError(f"component variances must be strictly positive, got {var.tolist()}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)


@dataclass(frozen=True, eq=False)
class Mixture:
    """Weighted mixture of diagonal Gaussians sharing one dimension"""
    means: np.ndarray      # (K, d)
    variances: np.ndarray  # (K, d)
    weights: np.ndarray    # (K,)

    def __post_init__(self):
        means = _frozen(self.means, 2)
        variances = _frozen(self.variances, 2)
        weights = _frozen(self.weights, 1)
        if means.shape != variances.shape:
            raise DomainError(f"means and variances shapes differ: {means.shape} vs {variances.shape}")
        if weights.shape != (means.shape[0],):
            raise DomainError(f"expected {means.shape[0]} weights, got {weights.shape[0]}")
        if means.shape[0] == 0:
            raise DomainError("a mixture needs at least one component")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
            raise DomainError("component means and variances must be finite")
        if not np.all(variances > 0):
            raise DomainError("component variances must be strictly positive")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0) or abs(weights.sum() - 1.0) > _SUM_TOL:
            raise DomainError(f"mixture weights must be nonnegative and sum to 1, got sum {weights.sum()!r}")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_components(cls, components: Sequence[GaussianComponent],
                        weights: Sequence[float]) -> "Mixture":
        dims = {c.mean.shape[0] for c in components}
        if len(dims) > 1:
            raise DomainError(f"components disagree on dimension: {sorted(dims)}")
        return cls(
            means=np.stack([c.mean for c in components]),
            variances=np.stack([c.var for c in components]),
            weights=np.asarray(weights, dtype=float),
        )

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def mean(self) -> np.ndarray:
        return self.weights @ self.means


@dataclass(frozen=True, eq=False)
class World:
    """Prompt-indexed class mixtures plus a prior over prompts"""
    prompts: Tuple[str, ...]
    class_mixtures: Tuple[Mixture, ...]
    prior: np.ndarray
    _index: Dict[str, int] = field(init=False, repr=False)
    _pooled: Mixture = field(init=False, repr=False)

    def __post_init__(self):
        prompts = tuple(self.prompts)
        mixtures = tuple(self.class_mixtures)
        prior = _frozen(self.prior, 1)
        if not prompts:
            raise DomainError("a world needs at least one prompt")
        if len(set(prompts)) != len(prompts):
            raise DomainError(f"prompt labels must be unique, got {list(prompts)}")
        if len(mixtures) != len(prompts):
            raise DomainError(f"{len(prompts)} prompts but {len(mixtures)} class mixtures")
        if prior.shape != (len(prompts),):
            raise DomainError(f"prior must have one entry per prompt, got shape {prior.shape}")
        if not np.all(np.isfinite(prior)) or np.any(prior < 0) or abs(prior.sum() - 1.0) > _SUM_TOL:
            raise DomainError(f"prior must be nonnegative and sum to 1 within 1e-12, got sum {prior.sum()!r}")
        dims = {m.dim for m in mixtures}
        if len(dims) != 1:
            raise DomainError(f"class mixtures disagree on dimension: {sorted(dims)}")

        # Pooled unconditional mixture: every class component weighted by prior(y) * w_k
        pooled = Mixture(
            means=np.concatenate([m.means for m in mixtures]),
            variances=np.concatenate([m.variances for m in mixtures]),
            weights=np.concatenate([p * m.weights for p, m in zip(prior, mixtures)]),
        )

        object.__setattr__(self, "prompts", prompts)
        object.__setattr__(self, "class_mixtures", mixtures)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "_index", {label: i for i, label in enumerate(prompts)})
        object.__setattr__(self, "_pooled", pooled)

    @classmethod
    def uniform(cls, class_mixtures: Dict[str, Mixture]) -> "World":
        n = len(class_mixtures)
        return cls(tuple(class_mixtures), tuple(class_mixtures.values()), np.full(n, 1.0 / n))

    @property
    def dim(self) -> int:
        return self.class_mixtures[0].dim

    @property
    def pooled(self) -> Mixture:
        return self._pooled

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownPromptError(label) from None

    def mixture_for(self, label: Optional[str]) -> Mixture:
        """Class mixture for a label, or the pooled mixture for None"""
        if label is None:
            return self._pooled
        return self.class_mixtures[self.index_of(label)]


# ============================================================================
# MIXTURE OPERATIONS
# ============================================================================

def diffused_mixture(m: Mixture, s: DiffusionSchedule, t: float) -> Mixture:
    """Closed-form marginal of the mixture under the forward process at time t."""
    alpha, sigma = schedule_at(s, t)
    return Mixture(
        means=alpha * m.means,
        variances=alpha * alpha * m.variances + sigma * sigma,
        weights=m.weights,
    )


def _check_dim(m: Mixture, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != m.dim:
        raise DomainError(f"expected points of dimension {m.dim}, got shape {x.shape}")
    return x


def _component_log_terms(m: Mixture, x: np.ndarray) -> np.ndarray:
    """log w_k + log N(x; mu_k, diag var_k), shape (..., K)"""
    diff = x[..., None, :] - m.means
    quad = np.sum(diff * diff / m.variances, axis=-1)
    log_det = np.sum(np.log(m.variances), axis=-1)
    return _log_weights(m.weights) - 0.5 * (m.dim * _LOG_2PI + log_det + quad)


def log_density(m: Mixture, x: np.ndarray) -> np.ndarray:
    """log sum_k w_k N(x; mu_k, diag var_k), log-sum-exp stabilized. Batched over leading axes."""
    x = _check_dim(m, x)
    out = logsumexp(_component_log_terms(m, x), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def responsibilities(m: Mixture, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities r_k(x), computed in log space."""
    x = _check_dim(m, x)
    terms = _component_log_terms(m, x)
    return np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))


def score(m: Mixture, x: np.ndarray) -> np.ndarray:
    """Gradient of log density: sum_k r_k(x) * (-(x - mu_k) / var_k)."""
    x = _check_dim(m, x)
    r = responsibilities(m, x)
    per_component = -(x[..., None, :] - m.means) / m.variances
    return np.sum(r[..., None] * per_component, axis=-2)


# ============================================================================
# WORLD ORACLES
# ============================================================================

def eps_pred(w: World, s: DiffusionSchedule, x_t: np.ndarray, y: Optional[str], t: float) -> np.ndarray:
    """Exact noise predictor: -sigma_t * score of the diffused class (or pooled) mixture."""
    alpha, sigma = schedule_at(s, t)
    if sigma <= 0.0:
        raise DomainError(f"eps prediction undefined at sigma_t = 0 (t={t})")
    mixture = w.mixture_for(y)
    return -sigma * score(diffused_mixture(mixture, s, t), x_t)


def classifier_logprob(w: World, s: DiffusionSchedule, x_t: np.ndarray, t: float, y: str) -> float:
    """log q(y | x_t) = log prior(y) + log q_t(x_t | y) - log q_t(x_t)."""
    idx = w.index_of(y)
    log_prior = -np.inf if w.prior[idx] == 0 else math.log(w.prior[idx])
    conditional = log_density(diffused_mixture(w.class_mixtures[idx], s, t), x_t)
    marginal = log_density(diffused_mixture(w.pooled, s, t), x_t)
    return log_prior + conditional - marginal


def classifier_probs(w: World, s: DiffusionSchedule, x_t: np.ndarray, t: float) -> np.ndarray:
    """Posterior over every prompt at x_t, normalized in log space."""
    joint = np.array([
        (-np.inf if p == 0 else math.log(p)) + log_density(diffused_mixture(m, s, t), x_t)
        for p, m in zip(w.prior, w.class_mixtures)
    ])
    return np.exp(joint - logsumexp(joint))
