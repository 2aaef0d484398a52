import math

import numpy as np
import pytest

from config import ScheduleKind
from diffusion_schedule import DiffusionSchedule, perturb, sample_timestep, schedule_at
from errors import DomainError


@pytest.mark.parametrize("kind", list(ScheduleKind))
def test_variance_preserving(kind):
    s = DiffusionSchedule(kind)
    for t in np.linspace(0.0, 1.0, 51):
        alpha, sigma = schedule_at(s, t)
        assert alpha * alpha + sigma * sigma == pytest.approx(1.0, abs=1e-12)
        assert alpha >= 0.0 and sigma >= 0.0


def test_linear_sigma_values():
    s = DiffusionSchedule(ScheduleKind.LINEAR_SIGMA)
    assert schedule_at(s, 0.6) == pytest.approx((0.8, 0.6))
    assert schedule_at(s, 0.0) == (1.0, 0.0)
    assert schedule_at(s, 1.0) == (0.0, 1.0)


def test_cosine_alpha_values():
    s = DiffusionSchedule(ScheduleKind.COSINE_ALPHA)
    alpha, sigma = s.at(0.5)
    assert alpha == pytest.approx(math.cos(math.pi / 4))
    assert sigma == pytest.approx(math.sin(math.pi / 4))
    assert s.alpha(1.0) == pytest.approx(0.0, abs=1e-15)
    assert s.sigma(1.0) == 1.0


@pytest.mark.parametrize("t", [-0.01, 1.01, float("nan")])
def test_time_outside_unit_interval(t):
    with pytest.raises(DomainError):
        schedule_at(DiffusionSchedule(), t)


def test_bad_range_rejected():
    with pytest.raises(DomainError):
        DiffusionSchedule(t_min=0.9, t_max=0.1)
    with pytest.raises(DomainError):
        DiffusionSchedule(t_min=-0.1)


def test_perturb():
    s = DiffusionSchedule()
    x_t = perturb(s, np.array([2.0, -1.0]), 0.6, np.array([1.0, 0.5]))
    np.testing.assert_allclose(x_t, [0.8 * 2.0 + 0.6, -0.8 + 0.3])
    with pytest.raises(DomainError):
        perturb(s, np.zeros(2), 0.5, np.zeros(3))


def test_sample_timestep_range():
    s = DiffusionSchedule(t_min=0.2, t_max=0.4)
    rng = np.random.default_rng(0)
    draws = [sample_timestep(s, rng) for _ in range(1000)]
    assert min(draws) >= 0.2 and max(draws) <= 0.4


def test_degenerate_range_returns_t_min():
    s = DiffusionSchedule(t_min=0.3, t_max=0.3)
    rng = np.random.default_rng(0)
    assert sample_timestep(s, rng) == 0.3


def test_zero_width_range_at_origin_rejected():
    with pytest.raises(DomainError):
        DiffusionSchedule(t_min=0.0, t_max=0.0)


def test_sampling_excludes_zero_lower_bound():
    s = DiffusionSchedule(t_min=0.0, t_max=0.5)
    rng = np.random.default_rng(3)
    draws = [sample_timestep(s, rng) for _ in range(2000)]
    assert min(draws) > 0.0 and max(draws) <= 0.5
    assert all(s.sigma(t) > 0.0 for t in draws)
