"""
TRAJECTORY LOGGING
Per-step diagnostics, run results and gradient-norm tables with their CSV / JSON codecs.
All files are written atomically (temp file + rename).
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from distillation_rules import DELTA_CLS_NEG, DELTA_CLS_POS, DELTA_GEN, DELTA_VSD_RESIDUAL

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = [
    "step", "t", "camera",
    "norm_delta_gen", "norm_delta_cls_pos", "norm_delta_cls_neg", "norm_total",
    "clf_logprob", "omega2",
]

GRADNORM_COLUMNS = [
    "step", "norm_delta_gen", "norm_delta_cls", "mean_norm_delta_gen", "mean_norm_delta_cls",
]


def _fmt(value: Optional[float]) -> str:
    """Shortest round-trip float text; empty cell for absent values"""
    if value is None:
        return ""
    return repr(float(value))


# ============================================================================
# TRAJECTORY
# ============================================================================

@dataclass
class TrajectoryRow:
    """One logged optimization step"""
    step: int
    t: float
    camera: int
    component_norms: Dict[str, float]
    norm_total: float
    clf_logprob: float
    omega2: Optional[float]
    theta: np.ndarray

    @property
    def norm_delta_gen(self) -> Optional[float]:
        # VSD reports its surrogate residual in the generative column
        if DELTA_GEN in self.component_norms:
            return self.component_norms[DELTA_GEN]
        return self.component_norms.get(DELTA_VSD_RESIDUAL)

    @property
    def norm_delta_cls_pos(self) -> Optional[float]:
        return self.component_norms.get(DELTA_CLS_POS)

    @property
    def norm_delta_cls_neg(self) -> Optional[float]:
        return self.component_norms.get(DELTA_CLS_NEG)

    def to_cells(self) -> List[str]:
        return [
            str(self.step), _fmt(self.t), str(self.camera),
            _fmt(self.norm_delta_gen), _fmt(self.norm_delta_cls_pos),
            _fmt(self.norm_delta_cls_neg), _fmt(self.norm_total),
            _fmt(self.clf_logprob), _fmt(self.omega2),
        ] + [_fmt(v) for v in self.theta]


@dataclass
class TrajectoryLog:
    """Rows strictly increasing in step index"""
    param_dim: int
    rows: List[TrajectoryRow] = field(default_factory=list)

    def append(self, row: TrajectoryRow):
        if self.rows and row.step <= self.rows[-1].step:
            raise ValueError(f"trajectory rows must increase in step: {row.step} after {self.rows[-1].step}")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def header(self) -> List[str]:
        return TRAJECTORY_COLUMNS + [f"theta_{i}" for i in range(self.param_dim)]

    def column(self, name: str) -> List[Optional[float]]:
        return [getattr(row, name) for row in self.rows]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow(row.to_cells())
        return buffer.getvalue()


# ============================================================================
# RUN RESULT
# ============================================================================

@dataclass
class RunResult:
    """Outcome of one optimization run"""
    final_theta: np.ndarray
    final_renders: List[np.ndarray]
    clf_probs: Dict[str, float]
    trajectory: TrajectoryLog
    wall_time_ms: float
    initial_clf_probs: Dict[str, float] = field(default_factory=dict)
    label: str = ""

    def prob(self, prompt: str) -> float:
        return self.clf_probs[prompt]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "final_theta": self.final_theta.tolist(),
            "final_renders": [r.tolist() for r in self.final_renders],
            "clf_probs": dict(self.clf_probs),
            "initial_clf_probs": dict(self.initial_clf_probs),
            "wall_time_ms": self.wall_time_ms,
            "steps_logged": len(self.trajectory),
            "label": self.label,
        }

    def summary(self, prompt: str) -> str:
        return (f"{self.label or 'run'}: P({prompt})={self.clf_probs.get(prompt, float('nan')):.4f} "
                f"theta={np.array2string(self.final_theta, precision=4)} "
                f"wall={self.wall_time_ms:.0f}ms")


# ============================================================================
# GRADIENT-NORM TABLE
# ============================================================================

@dataclass
class GradNormTable:
    """Per-step norms of the generative prior and classifier score for an SDS run"""
    steps: List[int]
    norm_gen: np.ndarray
    norm_cls: np.ndarray
    result: RunResult

    @property
    def mean_norm_gen(self) -> np.ndarray:
        return np.cumsum(self.norm_gen) / np.arange(1, len(self.norm_gen) + 1)

    @property
    def mean_norm_cls(self) -> np.ndarray:
        return np.cumsum(self.norm_cls) / np.arange(1, len(self.norm_cls) + 1)

    @property
    def ratio(self) -> float:
        """mean ||delta_gen|| / mean ||delta_cls||; +inf when the classifier score vanishes"""
        denominator = float(np.mean(self.norm_cls)) if len(self.norm_cls) else 0.0
        if denominator == 0.0:
            return math.inf
        return float(np.mean(self.norm_gen)) / denominator

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(GRADNORM_COLUMNS)
        for row in zip(self.steps, self.norm_gen, self.norm_cls, self.mean_norm_gen, self.mean_norm_cls):
            writer.writerow([str(row[0])] + [_fmt(v) for v in row[1:]])
        return buffer.getvalue()

    def to_dict(self) -> Dict[str, Any]:
        ratio = self.ratio
        return {
            "ratio": None if math.isinf(ratio) else ratio,
            "ratio_is_infinite": math.isinf(ratio),
            "mean_norm_delta_gen": float(np.mean(self.norm_gen)) if len(self.norm_gen) else 0.0,
            "mean_norm_delta_cls": float(np.mean(self.norm_cls)) if len(self.norm_cls) else 0.0,
            "rows": len(self.steps),
        }


# ============================================================================
# ATOMIC FILE OUTPUT
# ============================================================================

def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write text to a sibling temp file, then rename it over path"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info(f"Wrote {path}")
    return path


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_run_artifacts(out_dir: Union[str, Path], result: RunResult, prefix: str = "") -> Dict[str, Path]:
    """trajectory.csv and result.json for one run"""
    out_dir = Path(out_dir)
    return {
        "trajectory": atomic_write_text(out_dir / f"{prefix}trajectory.csv", result.trajectory.to_csv()),
        "result": write_json(out_dir / f"{prefix}result.json", result.to_dict()),
    }
