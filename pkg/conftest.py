import logging

import numpy as np
import pytest

from config import RuleKind
from diffusion_schedule import DiffusionSchedule
from distillation_rules import RuleConfig
from generator import Generator
from orchestrator import ExperimentOrchestrator, RunConfig
from presets import WORLD_PRESETS, two_mode_1d


@pytest.fixture(autouse=True)
def _quiet_logs():
    logging.getLogger().setLevel(logging.WARNING)
    yield


@pytest.fixture
def schedule():
    return DiffusionSchedule()


@pytest.fixture
def two_mode():
    return two_mode_1d()


@pytest.fixture
def all_worlds():
    return {name: build() for name, build in WORLD_PRESETS.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def orchestrator():
    return ExperimentOrchestrator(max_workers=1, show_progress=False)


@pytest.fixture
def make_run(schedule):
    """RunConfig factory over an identity generator"""

    def _make(world, kind=RuleKind.CSD, prompt="B", steps=2000, theta_init=None, **rule_fields):
        config = RunConfig(
            world=world,
            schedule=schedule,
            generator=Generator.identity(world.dim),
            rule=RuleConfig(kind, prompt=prompt, **rule_fields),
            steps=steps,
        )
        if theta_init is not None:
            config.theta_init = np.asarray(theta_init, dtype=float)
        return config

    return _make
