"""
DISTILLATION RULES
Image-space gradients delta_x for SDS, CSD, annealed-negative CSD, CSD editing, VSD and DDS,
each returned as a total plus its named additive components
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from config import RuleKind, TimeWeighting, WeightScheduleKind
from diffusion_schedule import DiffusionSchedule, perturb, schedule_at
from errors import ConfigurationError, DomainError
from generator import Generator, render
from mixture_world import World, eps_pred
from vsd_surrogate import Denoiser

logger = logging.getLogger(__name__)

# Fixed component names, also used as trajectory column sources
DELTA_GEN = "delta_gen"
DELTA_CLS_POS = "delta_cls_pos"
DELTA_CLS_NEG = "delta_cls_neg"
DELTA_VSD_RESIDUAL = "delta_vsd_residual"
DDS_REF_TERM = "dds_ref_term"


# ============================================================================
# CONFIGURATION TYPES
# ============================================================================

@dataclass(frozen=True)
class WeightSchedule:
    """Weight as a function of normalized optimization progress u in [0, 1]"""
    kind: WeightScheduleKind = WeightScheduleKind.CONSTANT
    start: float = 0.5
    end: Optional[float] = None

    def __post_init__(self):
        if self.end is None:
            object.__setattr__(self, "end", self.start)

    def value(self, u: float) -> float:
        u = min(max(u, 0.0), 1.0)
        if self.kind is WeightScheduleKind.CONSTANT:
            return self.start
        if self.kind is WeightScheduleKind.LINEAR_DECAY:
            return self.start + (self.end - self.start) * u
        # half cosine: start at u=0, end at u=1
        return self.end + (self.start - self.end) * 0.5 * (1.0 + math.cos(math.pi * u))


@dataclass(frozen=True)
class RuleConfig:
    """A gradient rule with its guidance weights and prompts"""
    kind: RuleKind
    prompt: str
    neg_prompt: Optional[str] = None
    omega: float = 40.0
    omega1: float = 1.0
    omega2_schedule: WeightSchedule = field(default_factory=WeightSchedule)
    w_of_t: TimeWeighting = TimeWeighting.ONE

    def __post_init__(self):
        if self.kind.needs_neg_prompt and self.neg_prompt is None:
            raise ConfigurationError(f"rule {self.kind.value} requires neg_prompt")
        if not self.kind.needs_neg_prompt and self.neg_prompt is not None:
            raise ConfigurationError(f"rule {self.kind.value} does not take neg_prompt")
        if self.omega < 0 or self.omega1 < 0:
            raise ConfigurationError(f"guidance weights must be nonnegative "
                                     f"(omega={self.omega}, omega1={self.omega1})")


@dataclass(frozen=True, eq=False)
class DdsReference:
    """Frozen reference render x_hat and its source prompt y_hat"""
    x_hat: np.ndarray
    y_hat: str

    def __post_init__(self):
        x_hat = np.array(self.x_hat, dtype=float, ndmin=1)
        x_hat.setflags(write=False)
        object.__setattr__(self, "x_hat", x_hat)


def capture_dds_references(g: Generator, theta: np.ndarray, y_hat: str) -> List[DdsReference]:
    """Freeze the reference render of every camera at the given parameters"""
    return [DdsReference(render(g, theta, c), y_hat) for c in range(g.num_cameras)]


@dataclass
class RuleState:
    """Everything a rule reads at one optimization step"""
    world: World
    schedule: DiffusionSchedule
    x_t: np.ndarray
    t: float
    eps: np.ndarray
    progress: float = 0.0
    surrogate: Optional[Denoiser] = None
    dds_ref: Optional[DdsReference] = None


@dataclass
class RuleDelta:
    """
    Rule output

    total = w_t * sum_k coefficients[k] * components[k], summed in insertion order.
    Components are the raw, unweighted vectors.
    """
    total: np.ndarray
    components: Dict[str, np.ndarray]
    coefficients: Dict[str, float]
    w_t: float

    @property
    def omega2(self) -> Optional[float]:
        coef = self.coefficients.get(DELTA_CLS_NEG)
        return None if coef is None else -coef


def combine(components: Dict[str, np.ndarray], coefficients: Dict[str, float], w_t: float) -> np.ndarray:
    """Weighted component sum, in the components' insertion order."""
    acc = None
    for name, vec in components.items():
        term = coefficients[name] * vec
        acc = term if acc is None else acc + term
    return w_t * acc


# ============================================================================
# ELEMENTARY TERMS
# ============================================================================

def delta_gen(w: World, s: DiffusionSchedule, x_t: np.ndarray, y: str, t: float,
              eps: np.ndarray) -> np.ndarray:
    """Generative prior term: eps_pred(x_t; y, t) - eps."""
    return eps_pred(w, s, x_t, y, t) - np.asarray(eps, dtype=float)


def delta_cls(w: World, s: DiffusionSchedule, x_t: np.ndarray, y: str, t: float) -> np.ndarray:
    """Classifier score: eps_pred(x_t; y, t) - eps_pred(x_t; t)."""
    return eps_pred(w, s, x_t, y, t) - eps_pred(w, s, x_t, None, t)


def time_weight(kind: TimeWeighting, s: DiffusionSchedule, t: float) -> float:
    if kind is TimeWeighting.ONE:
        return 1.0
    sigma = schedule_at(s, t)[1]
    return sigma * sigma


# ============================================================================
# RULE DISPATCH
# ============================================================================

def rule_delta(rule: RuleConfig, state: RuleState) -> RuleDelta:
    """Evaluate the rule's image-space gradient and its named components."""
    w, s, x_t, t, eps = state.world, state.schedule, state.x_t, state.t, state.eps
    if np.shape(x_t) != np.shape(eps):
        raise DomainError(f"x_t and eps shapes differ: {np.shape(x_t)} vs {np.shape(eps)}")
    kind = rule.kind
    components: Dict[str, np.ndarray] = {}
    coefficients: Dict[str, float] = {}

    def add(name: str, coef: float, vec: np.ndarray):
        components[name] = vec
        coefficients[name] = coef

    if kind is RuleKind.SDS:
        add(DELTA_GEN, 1.0, delta_gen(w, s, x_t, rule.prompt, t, eps))
        add(DELTA_CLS_POS, rule.omega, delta_cls(w, s, x_t, rule.prompt, t))

    elif kind is RuleKind.CSD:
        add(DELTA_CLS_POS, 1.0, delta_cls(w, s, x_t, rule.prompt, t))

    elif kind in (RuleKind.CSD_NEG, RuleKind.CSD_EDIT):
        # CSD_EDIT reads prompt as y_target and neg_prompt as y_edit
        omega2 = rule.omega2_schedule.value(state.progress)
        add(DELTA_CLS_POS, rule.omega1, delta_cls(w, s, x_t, rule.prompt, t))
        add(DELTA_CLS_NEG, -omega2, delta_cls(w, s, x_t, rule.neg_prompt, t))

    elif kind is RuleKind.VSD:
        if state.surrogate is None:
            raise ConfigurationError("rule vsd requires a surrogate denoiser")
        residual = eps_pred(w, s, x_t, rule.prompt, t) - state.surrogate.eps(s, x_t, rule.prompt, t)
        add(DELTA_VSD_RESIDUAL, 1.0, residual)
        add(DELTA_CLS_POS, rule.omega, delta_cls(w, s, x_t, rule.prompt, t))

    elif kind.needs_dds_reference:
        ref = state.dds_ref
        if ref is None:
            raise ConfigurationError(f"rule {kind.value} requires a DDS reference")
        if kind is RuleKind.CSD_ONLY_FROM_DDS:
            add(DELTA_CLS_POS, rule.omega, delta_cls(w, s, x_t, rule.prompt, t))
        else:
            # shared (t, eps) between the two SDS evaluations
            x_hat_t = perturb(s, ref.x_hat, t, eps)
            add(DELTA_GEN, 1.0, delta_gen(w, s, x_t, rule.prompt, t, eps))
            if kind is RuleKind.DDS:
                add(DELTA_CLS_POS, rule.omega, delta_cls(w, s, x_t, rule.prompt, t))
            add(DDS_REF_TERM, -1.0, delta_gen(w, s, x_hat_t, ref.y_hat, t, eps))
            add(DELTA_CLS_NEG, -rule.omega, delta_cls(w, s, x_hat_t, ref.y_hat, t))

    else:
        raise ConfigurationError(f"unsupported rule kind: {kind}")

    w_t = time_weight(rule.w_of_t, s, t)
    return RuleDelta(combine(components, coefficients, w_t), components, coefficients, w_t)
