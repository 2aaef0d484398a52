"""
EXPERIMENT CONFIG
JSON experiment files: pydantic models, defaults, static validation and resolution
into runtime objects. `validate` and every experiment subcommand share this path.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import (
    OptimizerKind, RuleKind, ScheduleKind, ThetaInit, TimeWeighting, WeightScheduleKind, get_config,
)
from diffusion_schedule import DiffusionSchedule
from distillation_rules import RuleConfig, WeightSchedule
from errors import ConfigurationError, LabError
from generator import Camera, Generator
from mixture_world import GaussianComponent, Mixture, World
from optimizers import OptimizerConfig
from orchestrator import RunConfig
from presets import generator_preset, world_preset
from vsd_surrogate import VsdSurrogate

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("run", "sweep", "anneal", "edit", "gradnorm", "compare")


def _defaults():
    return get_config()


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


SEED_BOUND = 2 ** 64


# ============================================================================
# FILE SCHEMA
# ============================================================================

class ComponentSpec(_Strict):
    model_config = ConfigDict(allow_inf_nan=False)

    mean: List[float]
    var: List[float]
    weight: float = 1.0


class WorldSpec(_Strict):
    model_config = ConfigDict(allow_inf_nan=False)

    prompts: Dict[str, List[ComponentSpec]]
    prior: Optional[Dict[str, float]] = None


class ScheduleSpec(_Strict):
    kind: ScheduleKind = ScheduleKind.LINEAR_SIGMA
    t_min: float = Field(default_factory=lambda: _defaults().t_min)
    t_max: float = Field(default_factory=lambda: _defaults().t_max)


class CameraSpec(_Strict):
    model_config = ConfigDict(allow_inf_nan=False)

    matrix: List[List[float]] = Field(min_length=1)
    offset: Optional[List[float]] = None

    @model_validator(mode="after")
    def _rectangular(self):
        widths = {len(row) for row in self.matrix}
        if len(widths) != 1 or 0 in widths:
            raise ValueError(f"camera matrix rows must be non-empty and equally long, got widths {sorted(widths)}")
        if self.offset is not None and len(self.offset) != len(self.matrix):
            raise ValueError(f"camera offset has {len(self.offset)} entries for {len(self.matrix)} matrix rows")
        return self


class GeneratorSpec(_Strict):
    preset: Optional[str] = None
    seed: Optional[int] = Field(None, ge=0, lt=SEED_BOUND)
    cameras: Optional[List[CameraSpec]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.preset is not None and self.cameras is not None:
            raise ValueError("give either a preset or explicit cameras, not both")
        if self.preset is None and self.cameras is None:
            self.preset = "identity"
        return self


class WeightScheduleSpec(_Strict):
    kind: WeightScheduleKind = WeightScheduleKind.CONSTANT
    start: float = Field(default_factory=lambda: _defaults().omega2)
    end: Optional[float] = None


class VsdSpec(_Strict):
    fit_window: int = Field(default_factory=lambda: _defaults().vsd_fit_window, gt=0)
    refresh_every: int = Field(default_factory=lambda: _defaults().vsd_refresh_every, gt=0)
    variance_floor: float = Field(default_factory=lambda: _defaults().variance_floor, gt=0)


class RuleSpec(_Strict):
    kind: RuleKind
    prompt: str
    neg_prompt: Optional[str] = None
    omega: float = Field(default_factory=lambda: _defaults().omega, ge=0)
    omega1: float = Field(default_factory=lambda: _defaults().omega1, ge=0)
    omega2_schedule: WeightScheduleSpec = Field(default_factory=WeightScheduleSpec)
    w_of_t: TimeWeighting = TimeWeighting.ONE
    vsd: VsdSpec = Field(default_factory=VsdSpec)


class OptimizerSpec(_Strict):
    kind: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = Field(default_factory=lambda: _defaults().learning_rate, gt=0)
    beta1: float = Field(default_factory=lambda: _defaults().adam_beta1, ge=0, lt=1)
    beta2: float = Field(default_factory=lambda: _defaults().adam_beta2, ge=0, lt=1)
    eps: float = Field(default_factory=lambda: _defaults().adam_eps, gt=0)


class SampleFromSpec(_Strict):
    sample_from: str


class EmptySpec(_Strict):
    pass


class SweepSpec(_Strict):
    omegas: List[float] = Field(min_length=1)


class EditSpec(_Strict):
    target: str
    edit: str
    w1: float = Field(default_factory=lambda: _defaults().omega1, ge=0)
    w2: float = Field(default_factory=lambda: _defaults().omega2, ge=0)


class CompareSpec(_Strict):
    kinds: List[RuleKind] = Field(min_length=1)


class ExperimentConfig(_Strict):
    """One file = one experiment"""
    version: Literal[1] = 1
    world: Union[str, WorldSpec]
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    generator: GeneratorSpec = Field(default_factory=GeneratorSpec)
    rule: RuleSpec
    optimizer: OptimizerSpec = Field(default_factory=OptimizerSpec)
    steps: int = Field(default_factory=lambda: _defaults().steps, gt=0)
    seed: int = Field(default_factory=lambda: _defaults().seed, ge=0, lt=SEED_BOUND)
    log_every: int = Field(default_factory=lambda: _defaults().log_every, gt=0)
    theta_init: Union[Literal["zeros", "uncond_mean"], SampleFromSpec, List[float]] = "zeros"
    run: Optional[EmptySpec] = None
    sweep: Optional[SweepSpec] = None
    anneal: Optional[EmptySpec] = None
    edit: Optional[EditSpec] = None
    gradnorm: Optional[EmptySpec] = None
    compare: Optional[CompareSpec] = None
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _one_experiment(self):
        present = [name for name in EXPERIMENT_KINDS if getattr(self, name) is not None]
        if len(present) != 1:
            raise ValueError(f"exactly one experiment stanza ({', '.join(EXPERIMENT_KINDS)}) "
                             f"is required, found {present or 'none'}")
        return self

    @property
    def experiment(self) -> str:
        return next(name for name in EXPERIMENT_KINDS if getattr(self, name) is not None)


# ============================================================================
# LOADING
# ============================================================================

def _line_of(text: str, loc: Sequence[Any]) -> Optional[int]:
    """
    Line of the innermost key on a validation error path.

    Keys are matched in path order, each search resuming at the previous match.
    Path parts that never appear as keys (list indices, union tags) are skipped.
    """
    lines = text.splitlines()
    start, found = 0, None
    for key in loc:
        if not isinstance(key, str):
            continue
        needle = f'"{key}"'
        for index in range(start, len(lines)):
            if needle in lines[index]:
                start, found = index, index + 1
                break
    return found


def parse_experiment(text: str, source: str = "<config>",
                     overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Parse JSON text, apply top-level overrides, validate the schema"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid JSON: {e.msg}", f"{source}:{e.lineno}:{e.colno}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("top level must be a JSON object", f"{source}:1")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        path = ".".join(str(p) for p in first["loc"])
        line = _line_of(text, first["loc"])
        location = f"{source}:{line} ({path})" if line else f"{source} ({path or 'top level'})"
        details = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'top level'}: {err['msg']}"
                            for err in e.errors())
        raise ConfigurationError(details, location) from None


def load_experiment(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config: {e.strerror}", str(path)) from None
    return parse_experiment(text, str(path), overrides)


# ============================================================================
# RESOLUTION
# ============================================================================

@dataclass
class ResolvedExperiment:
    """Runtime objects for one experiment file"""
    config: ExperimentConfig
    run_config: RunConfig

    @property
    def experiment(self) -> str:
        return self.config.experiment

    @property
    def output_dir(self) -> Path:
        if self.config.output_dir:
            return Path(self.config.output_dir)
        return _defaults().output_root / f"{self.experiment}-{self.run_config.rule.kind.value}"


def _build_world(spec: Union[str, WorldSpec]) -> World:
    if isinstance(spec, str):
        return world_preset(spec)
    labels = list(spec.prompts)
    mixtures = []
    for label in labels:
        components = spec.prompts[label]
        if not components:
            raise ConfigurationError(f"prompt {label!r} has no components", f"world.prompts.{label}")
        mixtures.append(Mixture.from_components(
            [GaussianComponent(c.mean, c.var) for c in components], [c.weight for c in components]))
    if spec.prior is None:
        prior = np.full(len(labels), 1.0 / len(labels))
    else:
        if set(spec.prior) != set(labels):
            raise ConfigurationError(
                f"prior must name every prompt exactly once (prompts {labels}, prior {sorted(spec.prior)})",
                "world.prior")
        prior = np.array([spec.prior[label] for label in labels])
    return World(tuple(labels), tuple(mixtures), prior)


def _build_generator(spec: GeneratorSpec, dim: int) -> Generator:
    if spec.cameras is not None:
        cameras = [Camera(c.matrix, c.offset if c.offset is not None else np.zeros(len(c.matrix)))
                   for c in spec.cameras]
        return Generator.affine(cameras)
    return generator_preset(spec.preset, dim, spec.seed)


def _build_rule(spec: RuleSpec) -> RuleConfig:
    sched = spec.omega2_schedule
    return RuleConfig(
        kind=spec.kind, prompt=spec.prompt, neg_prompt=spec.neg_prompt,
        omega=spec.omega, omega1=spec.omega1,
        omega2_schedule=WeightSchedule(sched.kind, sched.start, sched.end),
        w_of_t=spec.w_of_t,
    )


def _stage(location: str, build, *args):
    """Run one resolution stage, attaching its location to lab errors"""
    try:
        return build(*args)
    except ConfigurationError as e:
        if e.location is None:
            e.location = location
        raise
    except LabError as e:
        raise ConfigurationError(str(e), location) from e


def resolve(config: ExperimentConfig) -> ResolvedExperiment:
    """Build and statically check every runtime object the experiment needs"""
    world = _stage("world", _build_world, config.world)
    schedule = _stage("schedule", lambda s: DiffusionSchedule(s.kind, s.t_min, s.t_max), config.schedule)
    generator = _stage("generator", _build_generator, config.generator, world.dim)
    rule = _stage("rule", _build_rule, config.rule)
    opt = config.optimizer
    optimizer = _stage("optimizer", OptimizerConfig, opt.kind, opt.learning_rate, opt.beta1, opt.beta2, opt.eps)
    vsd = _stage("rule.vsd", lambda v: VsdSurrogate(fit_window=v.fit_window, refresh_every=v.refresh_every,
                                                    variance_floor=v.variance_floor), config.rule.vsd)

    theta_init: Union[ThetaInit, np.ndarray]
    sample_from = None
    if isinstance(config.theta_init, str):
        theta_init = ThetaInit(config.theta_init)
    elif isinstance(config.theta_init, SampleFromSpec):
        theta_init, sample_from = ThetaInit.SAMPLE_FROM, config.theta_init.sample_from
    else:
        theta_init = np.array(config.theta_init, dtype=float)

    run_config = RunConfig(
        world=world, schedule=schedule, generator=generator, rule=rule,
        steps=config.steps, optimizer=optimizer, seed=config.seed, log_every=config.log_every,
        theta_init=theta_init, sample_from=sample_from, vsd=vsd,
    )
    _stage("config", run_config.validate)
    _stage(config.experiment, _check_experiment, config, run_config)
    logger.debug(f"Resolved {config.experiment} experiment: world dim={world.dim} "
                 f"prompts={list(world.prompts)} rule={rule.kind.value}")
    return ResolvedExperiment(config, run_config)


def _check_experiment(config: ExperimentConfig, run_config: RunConfig):
    """Stanza-specific static checks"""
    world = run_config.world
    kind = run_config.rule.kind
    if config.gradnorm is not None and kind is not RuleKind.SDS:
        raise ConfigurationError(f"gradient-norm tracking needs rule sds, got {kind.value}", "rule.kind")
    if config.anneal is not None and kind is not RuleKind.CSD_NEG:
        raise ConfigurationError(f"anneal comparison needs rule csd_neg, got {kind.value}", "rule.kind")
    if config.edit is not None:
        for field_name in ("target", "edit"):
            label = getattr(config.edit, field_name)
            if label not in world.prompts:
                raise ConfigurationError(f"unknown prompt label: {label!r}", f"edit.{field_name}")
    if config.compare is not None:
        for k in config.compare.kinds:
            if k.needs_neg_prompt and run_config.rule.neg_prompt is None:
                raise ConfigurationError(f"rule {k.value} requires rule.neg_prompt", "compare.kinds")


def dump_resolved(config: ExperimentConfig) -> Dict[str, Any]:
    """Config with every default filled, for config.resolved.json"""
    return config.model_dump(mode="json", exclude_none=True)
