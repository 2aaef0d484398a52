"""
EXPERIMENT ORCHESTRATOR
Seeded distillation loop (sample t, camera, noise; evaluate rule; pull back; update theta)
and the diagnostic experiments built on it: gradient norms, omega sweeps, negative-prompt
annealing, editing, method comparisons and the DDS ablation
"""

import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from config import LabConfig, RuleKind, ThetaInit, WeightScheduleKind, get_config
from diffusion_schedule import DiffusionSchedule, perturb, sample_timestep, schedule_at
from distillation_rules import (
    RuleConfig, RuleState, WeightSchedule, capture_dds_references, rule_delta,
)
from errors import ConfigurationError, DivergedError
from generator import Generator, GeneratorParams, pullback, render
from mixture_world import World, classifier_logprob, classifier_probs
from optimizers import OptimizerConfig, build_optimizer
from trajectory import GradNormTable, RunResult, TrajectoryLog, TrajectoryRow
from vsd_surrogate import VsdSurrogate, fit_surrogate

logger = logging.getLogger(__name__)

# rules whose negative classifier weight follows the omega2 schedule
_NEGATIVE_WEIGHTED = (RuleKind.CSD_NEG, RuleKind.CSD_EDIT)


# ============================================================================
# RUN CONFIGURATION
# ============================================================================

@dataclass
class RunConfig:
    """Everything one optimization run needs"""
    world: World
    schedule: DiffusionSchedule
    generator: Generator
    rule: RuleConfig
    steps: int = 2000
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    log_every: int = 10
    theta_init: Union[ThetaInit, np.ndarray] = ThetaInit.ZEROS
    sample_from: Optional[str] = None
    vsd: VsdSurrogate = field(default_factory=VsdSurrogate)

    def validate(self):
        """Raise ConfigurationError on any static inconsistency"""
        if self.steps <= 0:
            raise ConfigurationError(f"steps must be positive, got {self.steps}", "steps")
        if self.log_every <= 0:
            raise ConfigurationError(f"log_every must be positive, got {self.log_every}", "log_every")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"seed must lie in [0, 2**64), got {self.seed}", "seed")
        if self.generator.dim != self.world.dim:
            raise ConfigurationError(
                f"generator renders dimension {self.generator.dim} but the world has dimension {self.world.dim}",
                "generator")
        for where, label in (("rule.prompt", self.rule.prompt), ("rule.neg_prompt", self.rule.neg_prompt)):
            if label is not None and label not in self.world.prompts:
                raise ConfigurationError(f"unknown prompt label: {label!r}", where)
        if isinstance(self.theta_init, ThetaInit):
            if self.theta_init is ThetaInit.SAMPLE_FROM:
                if self.sample_from is None:
                    raise ConfigurationError("theta_init sample_from needs a prompt label", "theta_init")
                if self.sample_from not in self.world.prompts:
                    raise ConfigurationError(f"unknown prompt label: {self.sample_from!r}", "theta_init")
        else:
            theta = np.asarray(self.theta_init, dtype=float)
            if theta.shape != (self.generator.param_dim,):
                raise ConfigurationError(
                    f"theta_init has shape {theta.shape}, expected ({self.generator.param_dim},)", "theta_init")
            if not np.all(np.isfinite(theta)):
                raise ConfigurationError("theta_init must be finite", "theta_init")

    def with_rule(self, **changes) -> "RunConfig":
        return replace(self, rule=replace(self.rule, **changes))


def _theta_for_render(g: Generator, x: np.ndarray) -> np.ndarray:
    """Parameters whose first-camera render is closest to x"""
    cam = g.camera(0)
    theta, *_ = np.linalg.lstsq(cam.matrix, x - cam.offset, rcond=None)
    return theta


def initial_theta(config: RunConfig) -> np.ndarray:
    """Resolve theta_init into a concrete p-vector"""
    init = config.theta_init
    if not isinstance(init, ThetaInit):
        return np.array(init, dtype=float)
    if init is ThetaInit.ZEROS:
        return np.zeros(config.generator.param_dim)
    if init is ThetaInit.UNCOND_MEAN:
        return _theta_for_render(config.generator, config.world.pooled.mean())
    mixture = config.world.mixture_for(config.sample_from)
    rng = np.random.default_rng([config.seed, 1])
    k = rng.choice(len(mixture.weights), p=mixture.weights)
    x = mixture.means[k] + np.sqrt(mixture.variances[k]) * rng.standard_normal(mixture.dim)
    return _theta_for_render(config.generator, x)


def camera_averaged_probs(config: RunConfig, theta: np.ndarray) -> Dict[str, float]:
    """Classifier posterior over prompts at t_min on the noise-free render, averaged over cameras"""
    t_eval = config.schedule.t_min
    alpha = schedule_at(config.schedule, t_eval)[0]
    g = config.generator
    probs = np.mean([
        classifier_probs(config.world, config.schedule, alpha * render(g, theta, c), t_eval)
        for c in range(g.num_cameras)
    ], axis=0)
    return {label: float(p) for label, p in zip(config.world.prompts, probs)}


# ============================================================================
# THE OPTIMIZATION LOOP
# ============================================================================

def execute_run(config: RunConfig, label: str = "", show_progress: bool = False) -> RunResult:
    """
    One seeded distillation run

    Each step draws, in order, t, the camera index and the noise from default_rng(seed),
    so runs differing only in rule or weights see identical (t, camera, eps) sequences.
    """
    config.validate()
    started = time.perf_counter()
    world, s, g, rule = config.world, config.schedule, config.generator, config.rule
    rng = np.random.default_rng(config.seed)
    optimizer = build_optimizer(config.optimizer)
    params = GeneratorParams(initial_theta(config))
    initial_probs = camera_averaged_probs(config, params.theta)

    dds_refs = None
    if rule.kind.needs_dds_reference:
        dds_refs = capture_dds_references(g, params.theta, rule.neg_prompt)

    surrogate: Optional[VsdSurrogate] = None
    renders = deque(maxlen=config.vsd.fit_window)

    t_eval = s.t_min
    alpha_eval = schedule_at(s, t_eval)[0]
    log = TrajectoryLog(g.param_dim)
    logger.info(f"Run {label or rule.kind.value}: prompt={rule.prompt!r} steps={config.steps} seed={config.seed}")

    for step in tqdm(range(config.steps), desc=label or rule.kind.value, disable=not show_progress, leave=False):
        t = sample_timestep(s, rng)
        c = int(rng.integers(g.num_cameras))
        eps = rng.standard_normal(g.dim)
        x = render(g, params.theta, c)
        x_t = perturb(s, x, t, eps)

        if rule.kind is RuleKind.VSD:
            renders.append(x)
            if step % config.vsd.refresh_every == 0:
                surrogate = fit_surrogate(surrogate or config.vsd, renders, rule.prompt)

        state = RuleState(
            world=world, schedule=s, x_t=x_t, t=t, eps=eps,
            progress=step / max(config.steps - 1, 1),
            surrogate=surrogate,
            dds_ref=dds_refs[c] if dds_refs else None,
        )
        delta = rule_delta(rule, state)

        if step % config.log_every == 0:
            row = TrajectoryRow(
                step=step, t=t, camera=c,
                component_norms={k: float(np.linalg.norm(v)) for k, v in delta.components.items()},
                norm_total=float(np.linalg.norm(delta.total)),
                clf_logprob=classifier_logprob(world, s, alpha_eval * x, t_eval, rule.prompt),
                omega2=delta.omega2 if rule.kind in _NEGATIVE_WEIGHTED else None,
                theta=params.snapshot(),
            )
            log.append(row)
            logger.debug(f"step {step} t={t:.4f} cam={c} |total|={row.norm_total:.4g} "
                         f"logq={row.clf_logprob:.4f}")

        params.theta = optimizer.step(params.theta, pullback(g, c, delta.total))
        if not params.is_finite():
            logger.error(f"Run {label or rule.kind.value} diverged at step {step}")
            raise DivergedError(step, params.snapshot())

    final_probs = camera_averaged_probs(config, params.theta)
    result = RunResult(
        final_theta=params.snapshot(),
        final_renders=[render(g, params.theta, c) for c in range(g.num_cameras)],
        clf_probs=final_probs,
        trajectory=log,
        wall_time_ms=(time.perf_counter() - started) * 1000.0,
        initial_clf_probs=initial_probs,
        label=label,
    )
    logger.info(result.summary(rule.prompt))
    return result


# ============================================================================
# EXPERIMENTS
# ============================================================================

class ExperimentOrchestrator:
    """
    Runs single optimizations and the multi-run diagnostics

    Member runs of sweeps and comparisons share the base seed (paired design) and are
    dispatched through joblib, so serial and parallel execution give identical results.
    """

    def __init__(self, config: Optional[LabConfig] = None,
                 max_workers: Optional[int] = None,
                 show_progress: Optional[bool] = None):
        self.config = config or get_config()
        self.max_workers = max_workers or self.config.max_workers
        self.show_progress = self.config.show_progress if show_progress is None else show_progress
        self.logger = logging.getLogger(__name__)

    def run(self, config: RunConfig, label: str = "") -> RunResult:
        return execute_run(config, label, self.show_progress)

    def _run_many(self, configs: Dict[str, RunConfig]) -> Dict[str, RunResult]:
        """Run every member; results keep the input order"""
        for cfg in configs.values():
            cfg.validate()
        labels = list(configs)
        if self.max_workers > 1 and len(labels) > 1:
            self.logger.info(f"Dispatching {len(labels)} runs over {self.max_workers} workers")
            results = Parallel(n_jobs=self.max_workers)(
                delayed(execute_run)(configs[name], name, False) for name in labels
            )
        else:
            results = [execute_run(configs[name], name, self.show_progress) for name in labels]
        return dict(zip(labels, results))

    def gradient_norm_experiment(self, config: RunConfig) -> GradNormTable:
        """Per-step norms of the generative prior and the classifier score of an SDS run"""
        if config.rule.kind is not RuleKind.SDS:
            raise ConfigurationError(
                f"gradient-norm tracking needs rule sds, got {config.rule.kind.value}", "rule.kind")
        result = self.run(config, "gradnorm")
        rows = result.trajectory.rows
        table = GradNormTable(
            steps=[row.step for row in rows],
            norm_gen=np.array([row.norm_delta_gen for row in rows], dtype=float),
            norm_cls=np.array([row.norm_delta_cls_pos for row in rows], dtype=float),
            result=result,
        )
        if not np.any(table.norm_cls):
            self.logger.warning("Classifier score vanished at every logged step; ratio reported as +inf")
        self.logger.info(f"mean |delta_gen| / mean |delta_cls| = {table.ratio:.4g}")
        return table

    def omega_sweep(self, base: RunConfig, omegas: Sequence[float]) -> List[RunResult]:
        """One run per guidance weight, identical seeds, results in input order"""
        omegas = list(omegas)
        if not omegas:
            raise ConfigurationError("omega sweep needs at least one omega", "sweep.omegas")
        if len(omegas) == 1:
            self.logger.warning(f"Omega sweep with a single value {omegas[0]}")
        configs = {f"omega={w:g}#{i}": base.with_rule(omega=float(w)) for i, w in enumerate(omegas)}
        return list(self._run_many(configs).values())

    def anneal_comparison(self, base: RunConfig) -> Dict[str, RunResult]:
        """Fixed omega2 = start against a linear decay start -> 0"""
        if base.rule.kind is not RuleKind.CSD_NEG:
            raise ConfigurationError(
                f"anneal comparison needs rule csd_neg, got {base.rule.kind.value}", "rule.kind")
        start = base.rule.omega2_schedule.start
        return self._run_many({
            "fixed": base.with_rule(omega2_schedule=WeightSchedule(WeightScheduleKind.CONSTANT, start, start)),
            "annealed": base.with_rule(omega2_schedule=WeightSchedule(WeightScheduleKind.LINEAR_DECAY, start, 0.0)),
        })

    def edit_experiment(self, source: RunConfig, target: str, edit: str, w1: float, w2: float,
                        source_theta: Optional[np.ndarray] = None) -> RunResult:
        """
        Continue from a source scene under CSD editing

        Args:
            source: the source run; its theta_init (or source_theta) is the starting scene
            target: prompt describing the edited scene
            edit: prompt describing the part to remove
            w1, w2: weights of the target and edit classifier scores
            source_theta: parameters of a completed source run, overriding source.theta_init
        """
        source.world.index_of(target)
        source.world.index_of(edit)
        rule = RuleConfig(
            kind=RuleKind.CSD_EDIT, prompt=target, neg_prompt=edit,
            omega1=w1, omega2_schedule=WeightSchedule(WeightScheduleKind.CONSTANT, w2, w2),
            w_of_t=source.rule.w_of_t,
        )
        config = replace(source, rule=rule)
        if source_theta is not None:
            config = replace(config, theta_init=np.asarray(source_theta, dtype=float))
        result = self.run(config, "edit")
        before = ", ".join(f"{k}={v:.3f}" for k, v in result.initial_clf_probs.items())
        after = ", ".join(f"{k}={v:.3f}" for k, v in result.clf_probs.items())
        self.logger.info(f"Edit {source.rule.prompt!r} -> {target!r} (removing {edit!r}): "
                         f"before [{before}] after [{after}]")
        return result

    def method_comparison(self, base: RunConfig, kinds: Sequence[RuleKind]) -> Dict[str, RunResult]:
        """Same world, seed and weights under several rules, keyed by rule kind"""
        if not kinds:
            raise ConfigurationError("method comparison needs at least one rule kind", "compare.kinds")
        configs = {}
        for kind in kinds:
            neg = base.rule.neg_prompt if kind.needs_neg_prompt else None
            if kind.needs_neg_prompt and neg is None:
                raise ConfigurationError(f"rule {kind.value} requires neg_prompt", "rule.neg_prompt")
            configs[kind.value] = base.with_rule(kind=kind, neg_prompt=neg)
        return self._run_many(configs)

    def dds_ablation(self, source: RunConfig, target: str,
                     omega: Optional[float] = None) -> Dict[str, RunResult]:
        """
        DDS against its ablations on an edit from source.rule.prompt to target:
        full DDS, DDS without guidance weight, DDS without the target classifier score,
        and the target classifier score alone
        """
        source.world.index_of(target)
        omega = source.rule.omega if omega is None else omega
        base = replace(source, rule=RuleConfig(
            kind=RuleKind.DDS, prompt=target, neg_prompt=source.rule.prompt,
            omega=omega, w_of_t=source.rule.w_of_t,
        ))
        return self._run_many({
            "dds": base,
            "dds_omega0": base.with_rule(omega=0.0),
            "dds_no_cls": base.with_rule(kind=RuleKind.DDS_NO_CLS),
            "csd_only_from_dds": base.with_rule(kind=RuleKind.CSD_ONLY_FROM_DDS),
        })


if __name__ == "__main__":
    from presets import two_mode_1d

    print("=" * 70)
    print("EXPERIMENT ORCHESTRATOR - Demo")
    print("=" * 70)
    orchestrator = ExperimentOrchestrator(show_progress=True)
    world = two_mode_1d()
    demo = RunConfig(
        world=world, schedule=DiffusionSchedule(), generator=Generator.identity(world.dim),
        rule=RuleConfig(RuleKind.CSD, prompt="B"), steps=500,
    )
    for name, res in orchestrator.method_comparison(demo, [RuleKind.SDS, RuleKind.CSD]).items():
        print(f"  {name:6} | P(B)={res.prob('B'):.4f} | theta={res.final_theta}")
