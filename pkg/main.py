"""
SCORE DISTILLATION LAB - Command Line
Parse an experiment file, dispatch it to the orchestrator, write CSV / JSON artifacts
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from config import get_config
from errors import ConfigurationError, LabError, exit_code_for
from experiment_config import ResolvedExperiment, dump_resolved, load_experiment, resolve
from orchestrator import ExperimentOrchestrator
from presets import describe_presets
from trajectory import RunResult, atomic_write_text, write_json, write_run_artifacts

logger = logging.getLogger(__name__)

EXPERIMENT_COMMANDS = {
    "run": "optimize once under the configured rule",
    "sweep": "one run per guidance weight in sweep.omegas",
    "anneal": "fixed against linearly decayed negative weight (rule csd_neg)",
    "edit": "continue from the source scene under CSD editing",
    "gradnorm": "track generative prior and classifier score norms (rule sds)",
    "compare": "same seed under each rule kind in compare.kinds",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="score-lab",
        description="Score distillation experiments over analytic Gaussian-mixture diffusion models",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in EXPERIMENT_COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", type=Path, help="experiment JSON file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--steps", type=int, default=None, help="override the number of steps")
        cmd.add_argument("--out", type=Path, default=None, help="override output_dir")
        cmd.add_argument("--workers", type=int, default=None, help="parallel member runs for sweeps")
        cmd.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    validate = sub.add_parser("validate", help="parse and check a config without running it")
    validate.add_argument("config", type=Path)
    sub.add_parser("presets", help="list built-in worlds")
    return parser


# ============================================================================
# EXPERIMENT DISPATCH
# ============================================================================

def _write_members(out_dir: Path, results: Dict[str, RunResult], prompt: str) -> Dict[str, dict]:
    summary = {}
    for i, (name, result) in enumerate(results.items()):
        write_run_artifacts(out_dir, result, prefix=f"{i:02d}_{_slug(name)}_")
        summary[name] = {"clf_prob": result.clf_probs[prompt], "final_theta": result.final_theta.tolist(),
                         "wall_time_ms": result.wall_time_ms}
    return summary


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def execute(resolved: ResolvedExperiment, orchestrator: ExperimentOrchestrator, out_dir: Path) -> str:
    """Run the experiment, write its artifacts and return the one-line summary"""
    cfg = resolved.config
    base = resolved.run_config
    prompt = base.rule.prompt

    if cfg.run is not None:
        result = orchestrator.run(base, "run")
        write_run_artifacts(out_dir, result)
        return _one_line(result, prompt)

    if cfg.gradnorm is not None:
        table = orchestrator.gradient_norm_experiment(base)
        write_run_artifacts(out_dir, table.result)
        atomic_write_text(out_dir / "gradnorm.csv", table.to_csv())
        write_json(out_dir / "gradnorm.json", table.to_dict())
        return f"{_one_line(table.result, prompt)} ratio={table.ratio:.4g}"

    if cfg.edit is not None:
        result = orchestrator.edit_experiment(base, cfg.edit.target, cfg.edit.edit, cfg.edit.w1, cfg.edit.w2)
        write_run_artifacts(out_dir, result)
        return _one_line(result, cfg.edit.target)

    if cfg.sweep is not None:
        results = orchestrator.omega_sweep(base, cfg.sweep.omegas)
        named = {r.label: r for r in results}
    elif cfg.anneal is not None:
        named = orchestrator.anneal_comparison(base)
    else:
        named = orchestrator.method_comparison(base, cfg.compare.kinds)

    summary = _write_members(out_dir, named, prompt)
    write_json(out_dir / "summary.json", {"experiment": cfg.experiment, "prompt": prompt, "runs": summary})
    total_ms = sum(r.wall_time_ms for r in named.values())
    probs = " ".join(f"{name}:{r.clf_probs[prompt]:.4f}" for name, r in named.items())
    return f"{cfg.experiment} P({prompt}) {probs} wall={total_ms:.0f}ms"


def _one_line(result: RunResult, prompt: str) -> str:
    return f"P({prompt})={result.clf_probs[prompt]:.4f} wall={result.wall_time_ms:.0f}ms"


# ============================================================================
# ENTRY POINT
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    lab = get_config()

    if args.command == "presets":
        for line in describe_presets():
            print(line)
        return 0

    if getattr(args, "quiet", False):
        logging.getLogger().setLevel(logging.WARNING)

    try:
        if not lab.validate():
            raise ConfigurationError("invalid lab settings (see log for each violation)", "environment")
        overrides = {}
        if args.command != "validate":
            overrides = {"seed": args.seed, "steps": args.steps,
                         "output_dir": str(args.out) if args.out else None}
        resolved = resolve(load_experiment(args.config, overrides))

        if args.command == "validate":
            print(f"{args.config}: ok ({resolved.experiment} experiment, rule {resolved.run_config.rule.kind.value})")
            return 0

        if resolved.experiment != args.command:
            raise ConfigurationError(
                f"config declares a {resolved.experiment} experiment; run it with `{resolved.experiment}`",
                str(args.config))

        out_dir = resolved.output_dir
        write_json(out_dir / "config.resolved.json", dump_resolved(resolved.config))
        orchestrator = ExperimentOrchestrator(
            lab,
            max_workers=args.workers,
            show_progress=sys.stderr.isatty() and not args.quiet,
        )
        logger.info(f"Starting {resolved.experiment} experiment -> {out_dir}")
        print(execute(resolved, orchestrator, out_dir))
        return 0

    except LabError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
