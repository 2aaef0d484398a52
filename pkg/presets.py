"""
BUILT-IN PRESETS
Named worlds used across the experiments and tests, plus camera presets for the generator
"""

import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from errors import ConfigurationError
from generator import Camera, Generator
from mixture_world import GaussianComponent, Mixture, World

logger = logging.getLogger(__name__)


def _single(mean: float, var: float) -> Mixture:
    return Mixture.from_components([GaussianComponent([mean], [var])], [1.0])


# ============================================================================
# WORLDS
# ============================================================================

def two_mode_1d() -> World:
    """A = N(-2, 0.25), B = N(2, 0.25)"""
    return World.uniform({"A": _single(-2.0, 0.25), "B": _single(2.0, 0.25)})


def three_class_1d() -> World:
    """Target y close to a negative y_neg, with an unrelated third class"""
    return World.uniform({
        "y": _single(2.0, 0.1),
        "y_neg": _single(2.8, 0.1),
        "other": _single(-2.0, 0.1),
    })


def grid_2d() -> World:
    """3x3 grid at {-3, 0, 3}^2; each prompt owns one column of three components"""
    coords = (-3.0, 0.0, 3.0)
    classes = {}
    for label, x in zip(("left", "center", "right"), coords):
        components = [GaussianComponent([x, y], [0.2, 0.2]) for y in coords]
        classes[label] = Mixture.from_components(components, [1 / 3, 1 / 3, 1 / 3])
    return World.uniform(classes)


def shared_mode_1d() -> World:
    """Both prompts dominated by generic content at 0, with a small prompt-specific mode"""
    generic = GaussianComponent([0.0], [0.25])
    return World.uniform({
        "A": Mixture.from_components([generic, GaussianComponent([-2.0], [0.25])], [0.8, 0.2]),
        "B": Mixture.from_components([generic, GaussianComponent([2.0], [0.25])], [0.8, 0.2]),
    })


def single_1d() -> World:
    return World.uniform({"only": _single(0.0, 1.0)})


WORLD_PRESETS: Dict[str, Callable[[], World]] = {
    "two-mode-1d": two_mode_1d,
    "three-class-1d": three_class_1d,
    "grid-2d": grid_2d,
    "shared-mode-1d": shared_mode_1d,
    "single-1d": single_1d,
}


def world_preset(name: str) -> World:
    try:
        builder = WORLD_PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown world preset {name!r}; available: {', '.join(WORLD_PRESETS)}") from None
    return builder()


def describe_presets() -> List[str]:
    """One line per preset: name, prompts and dimension"""
    lines = []
    for name, builder in WORLD_PRESETS.items():
        world = builder()
        lines.append(f"{name:16} dim={world.dim}  prompts={', '.join(world.prompts)}  "
                     f"({(builder.__doc__ or '').strip()})")
    return lines


# ============================================================================
# CAMERAS
# ============================================================================

def random_orthonormal_cameras(num: int, dim: int, seed: int = 0) -> List[Camera]:
    """num seeded orthogonal dim x dim views with zero offset"""
    if num < 1:
        raise ConfigurationError(f"random-orthonormal needs at least one camera, got {num}")
    rng = np.random.default_rng(seed)
    cameras = []
    for _ in range(num):
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        # sign-fix so the draw is a unique orthogonal matrix
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        cameras.append(Camera(q, np.zeros(dim)))
    return cameras


def generator_preset(spec: str, dim: int, seed: Optional[int] = None) -> Generator:
    """'identity' or 'random-orthonormal:k'"""
    if spec == "identity":
        return Generator.identity(dim)
    name, _, count = spec.partition(":")
    if name == "random-orthonormal":
        try:
            num = int(count)
        except ValueError:
            raise ConfigurationError(f"bad camera count in generator preset {spec!r}") from None
        return Generator.affine(random_orthonormal_cameras(num, dim, 0 if seed is None else seed))
    raise ConfigurationError(f"unknown generator preset {spec!r}; expected 'identity' or 'random-orthonormal:k'")


if __name__ == "__main__":
    print("=" * 70)
    print("BUILT-IN WORLD PRESETS")
    print("=" * 70)
    for line in describe_presets():
        print(f"  {line}")
