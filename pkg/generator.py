"""
GENERATOR
Differentiable affine renderers x = g(theta; c) and the transposed-Jacobian pullback
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from config import GeneratorKind
from errors import CameraIndexError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Camera:
    """Fixed affine view: render = matrix @ theta + offset"""
    matrix: np.ndarray  # (d, p)
    offset: np.ndarray  # (d,)

    def __post_init__(self):
        try:
            matrix = np.array(self.matrix, dtype=float, ndmin=2)
            offset = np.array(self.offset, dtype=float, ndmin=1)
        except (TypeError, ValueError) as e:
            raise DomainError(f"camera matrix and offset must be rectangular numeric arrays: {e}") from e
        if matrix.ndim != 2 or offset.shape != (matrix.shape[0],):
            raise DomainError(f"camera matrix {matrix.shape} and offset {offset.shape} disagree")
        if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(offset))):
            raise DomainError("camera matrix and offset must be finite")
        matrix.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape


@dataclass
class GeneratorParams:
    """Learnable parameters theta; owned by the optimization loop"""
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float, ndmin=1)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta)))

    def snapshot(self) -> np.ndarray:
        return self.theta.copy()


@dataclass(frozen=True, eq=False)
class Generator:
    """
    Parametric renderer

    Identity: one implicit camera, p = d, render = theta.
    AffineMultiView: a list of cameras sharing (d, p).
    """
    kind: GeneratorKind
    cameras: Tuple[Camera, ...]
    dim: int          # d, render dimension
    param_dim: int    # p

    @classmethod
    def identity(cls, dim: int) -> "Generator":
        return cls(GeneratorKind.IDENTITY, (), dim, dim)

    @classmethod
    def affine(cls, cameras: Sequence[Camera]) -> "Generator":
        cameras = tuple(cameras)
        if not cameras:
            raise DomainError("an affine generator needs at least one camera")
        shapes = {c.shape for c in cameras}
        if len(shapes) != 1:
            raise DomainError(f"cameras disagree on (d, p): {sorted(shapes)}")
        d, p = shapes.pop()
        return cls(GeneratorKind.AFFINE_MULTI_VIEW, cameras, d, p)

    @property
    def num_cameras(self) -> int:
        return 1 if self.kind is GeneratorKind.IDENTITY else len(self.cameras)

    def camera(self, c: int) -> Camera:
        if not 0 <= c < self.num_cameras:
            raise CameraIndexError(f"camera index {c} out of range for {self.num_cameras} camera(s)")
        if self.kind is GeneratorKind.IDENTITY:
            return Camera(np.eye(self.dim), np.zeros(self.dim))
        return self.cameras[c]


def render(g: Generator, theta: GeneratorParams, c: int) -> np.ndarray:
    """x = g(theta; c)."""
    values = theta.theta if isinstance(theta, GeneratorParams) else np.asarray(theta, dtype=float)
    if values.shape != (g.param_dim,):
        raise DomainError(f"expected {g.param_dim} parameters, got shape {values.shape}")
    if g.kind is GeneratorKind.IDENTITY:
        if c != 0:
            raise CameraIndexError(f"identity generator has a single camera, got index {c}")
        return values.copy()
    cam = g.camera(c)
    return cam.matrix @ values + cam.offset


def pullback(g: Generator, c: int, delta_x: np.ndarray) -> np.ndarray:
    """(dx/dtheta)^T delta_x."""
    delta_x = np.asarray(delta_x, dtype=float)
    if delta_x.shape != (g.dim,):
        raise DomainError(f"expected an image-space vector of dimension {g.dim}, got shape {delta_x.shape}")
    if g.kind is GeneratorKind.IDENTITY:
        if c != 0:
            raise CameraIndexError(f"identity generator has a single camera, got index {c}")
        return delta_x.copy()
    return g.camera(c).matrix.T @ delta_x
