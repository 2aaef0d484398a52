import math

import numpy as np
import pytest

from errors import DomainError, UnknownPromptError
from mixture_world import (
    GaussianComponent, Mixture, World, classifier_logprob, classifier_probs, diffused_mixture,
    eps_pred, log_density, responsibilities, score,
)
from presets import single_1d

H = 1e-5


def _fd_grad(f, x, h=H):
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2 * h)
    return grad


def _random_state(world, rng):
    x_t = rng.uniform(-4.0, 4.0, size=world.dim)
    t = float(rng.uniform(0.05, 0.95))
    y = world.prompts[rng.integers(len(world.prompts))]
    return x_t, t, y


# ============================================================================
# TYPES
# ============================================================================

def test_component_requires_positive_variance():
    with pytest.raises(DomainError):
        GaussianComponent([0.0], [0.0])


def test_mixture_weights_must_sum_to_one():
    with pytest.raises(DomainError):
        Mixture([[0.0], [1.0]], [[1.0], [1.0]], [0.5, 0.4])


def test_non_finite_and_ragged_inputs_rejected():
    with pytest.raises(DomainError):
        GaussianComponent([float("nan")], [1.0])
    with pytest.raises(DomainError):
        GaussianComponent([0.0], [float("inf")])
    with pytest.raises(DomainError):
        Mixture([[0.0], [1.0]], [[1.0], [1.0]], [float("nan"), 1.0])
    with pytest.raises(DomainError):
        Mixture([[0.0], [1.0, 2.0]], [[1.0], [1.0]], [0.5, 0.5])


def test_world_invariants():
    m = Mixture.from_components([GaussianComponent([0.0], [1.0])], [1.0])
    with pytest.raises(DomainError):
        World(("a", "a"), (m, m), np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        World(("a", "b"), (m, m), np.array([0.5, 0.4]))
    m2 = Mixture.from_components([GaussianComponent([0.0, 0.0], [1.0, 1.0])], [1.0])
    with pytest.raises(DomainError):
        World(("a", "b"), (m, m2), np.array([0.5, 0.5]))


def test_pooled_weights_are_prior_times_component_weight():
    a = Mixture.from_components([GaussianComponent([-1.0], [1.0]), GaussianComponent([1.0], [1.0])], [0.25, 0.75])
    b = Mixture.from_components([GaussianComponent([3.0], [1.0])], [1.0])
    world = World(("a", "b"), (a, b), np.array([0.4, 0.6]))
    np.testing.assert_allclose(world.pooled.weights, [0.1, 0.3, 0.6])
    assert world.mixture_for(None) is world.pooled
    with pytest.raises(UnknownPromptError):
        world.mixture_for("c")


# ============================================================================
# MIXTURE OPERATIONS
# ============================================================================

def test_diffused_mixture_endpoints(two_mode, schedule):
    m = two_mode.pooled
    start = diffused_mixture(m, schedule, 0.0)
    np.testing.assert_array_equal(start.means, m.means)
    np.testing.assert_array_equal(start.variances, m.variances)
    end = diffused_mixture(m, schedule, 1.0)
    np.testing.assert_allclose(end.means, 0.0)
    np.testing.assert_allclose(end.variances, 1.0)


def test_diffused_single_component(schedule):
    m = Mixture.from_components([GaussianComponent([2.0], [0.25])], [1.0])
    d = diffused_mixture(m, schedule, 0.6)
    np.testing.assert_allclose(d.means, [[1.6]])
    np.testing.assert_allclose(d.variances, [[0.52]])


def test_log_density_standard_normal():
    m = Mixture.from_components([GaussianComponent([0.0], [1.0])], [1.0])
    assert log_density(m, np.array([0.0])) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)


def test_duplicate_components_match_single():
    c = GaussianComponent([0.3, -1.0], [0.5, 2.0])
    single = Mixture.from_components([c], [1.0])
    double = Mixture.from_components([c, c], [0.5, 0.5])
    x = np.array([0.1, 0.7])
    assert log_density(double, x) == pytest.approx(log_density(single, x), abs=1e-14)


def test_log_density_direct_summation():
    m = Mixture.from_components([GaussianComponent([-2.0], [0.25]), GaussianComponent([2.0], [0.25])], [0.3, 0.7])
    x = 0.5

    def normal(x, mu, var):
        return math.exp(-(x - mu) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)

    expected = math.log(math.fsum([0.3 * normal(x, -2.0, 0.25), 0.7 * normal(x, 2.0, 0.25)]))
    assert log_density(m, np.array([x])) == pytest.approx(expected, rel=1e-12)


def test_log_density_far_tail_is_finite():
    m = Mixture.from_components([GaussianComponent([-2.0], [0.01]), GaussianComponent([2.0], [0.01])], [0.5, 0.5])
    value = log_density(m, np.array([200.0]))
    assert np.isfinite(value)
    r = responsibilities(m, np.array([200.0]))
    np.testing.assert_allclose(r, [0.0, 1.0])


def test_log_density_dimension_mismatch():
    m = Mixture.from_components([GaussianComponent([0.0], [1.0])], [1.0])
    with pytest.raises(DomainError):
        log_density(m, np.zeros(2))


def test_score_examples():
    normal = Mixture.from_components([GaussianComponent([0.0], [1.0])], [1.0])
    np.testing.assert_allclose(score(normal, np.array([1.5])), [-1.5])
    symmetric = Mixture.from_components(
        [GaussianComponent([-1.5], [0.3]), GaussianComponent([1.5], [0.3])], [0.5, 0.5])
    np.testing.assert_allclose(score(symmetric, np.array([0.0])), [0.0], atol=1e-15)


def test_score_matches_finite_difference():
    m = Mixture.from_components([GaussianComponent([-2.0], [0.25]), GaussianComponent([2.0], [0.25])], [0.3, 0.7])
    x = np.array([0.5])
    np.testing.assert_allclose(score(m, x), _fd_grad(lambda z: log_density(m, z), x), atol=1e-6)


def test_score_is_batched(all_worlds):
    m = all_worlds["grid-2d"].pooled
    xs = np.random.default_rng(0).normal(size=(5, 2))
    batched = score(m, xs)
    for i in range(5):
        np.testing.assert_allclose(batched[i], score(m, xs[i]))


def test_score_at_full_noise_is_standard_normal(all_worlds, schedule):
    x = np.array([0.7, -1.2])
    m = diffused_mixture(all_worlds["grid-2d"].pooled, schedule, 1.0)
    np.testing.assert_allclose(score(m, x), -x, atol=1e-10)


# ============================================================================
# WORLD ORACLES
# ============================================================================

def test_eps_pred_unit_gaussian_fixed_point(schedule):
    world = single_1d()
    for t in (0.1, 0.5, 0.9):
        x_t = np.array([1.3])
        np.testing.assert_allclose(eps_pred(world, schedule, x_t, "only", t), schedule.sigma(t) * x_t)
        np.testing.assert_array_equal(eps_pred(world, schedule, x_t, "only", t),
                                      eps_pred(world, schedule, x_t, None, t))


def test_eps_pred_rejects_zero_sigma(two_mode, schedule):
    with pytest.raises(DomainError):
        eps_pred(two_mode, schedule, np.array([0.0]), "A", 0.0)


def test_eps_pred_unknown_prompt(two_mode, schedule):
    with pytest.raises(UnknownPromptError):
        eps_pred(two_mode, schedule, np.array([0.0]), "C", 0.5)


def test_eps_pred_two_class_example(two_mode, schedule):
    x_t = np.array([0.5])
    cond = diffused_mixture(two_mode.mixture_for("B"), schedule, 0.6)
    expected = -0.6 * _fd_grad(lambda z: log_density(cond, z), x_t)
    np.testing.assert_allclose(eps_pred(two_mode, schedule, x_t, "B", 0.6), expected, rtol=1e-6)


def test_eps_pred_equals_scaled_score(all_worlds, schedule, rng):
    """Noise prediction is -sigma_t times the diffused conditional score"""
    for _ in range(200):
        world = list(all_worlds.values())[rng.integers(len(all_worlds))]
        x_t, t, y = _random_state(world, rng)
        cond = diffused_mixture(world.mixture_for(y), schedule, t)
        expected = -schedule.sigma(t) * _fd_grad(lambda z: log_density(cond, z), x_t)
        np.testing.assert_allclose(eps_pred(world, schedule, x_t, y, t), expected, rtol=1e-4, atol=1e-7)


def test_classifier_gradient_identity(all_worlds, schedule, rng):
    """-(eps(y) - eps(none)) / sigma_t is the gradient of log q(y | x_t)"""
    for _ in range(200):
        world = list(all_worlds.values())[rng.integers(len(all_worlds))]
        x_t, t, y = _random_state(world, rng)
        sigma = schedule.sigma(t)
        lhs = -(eps_pred(world, schedule, x_t, y, t) - eps_pred(world, schedule, x_t, None, t)) / sigma
        rhs = _fd_grad(lambda z: classifier_logprob(world, schedule, z, t, y), x_t)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-4, atol=1e-6)


def test_classifier_logprob_examples(two_mode, schedule):
    assert classifier_logprob(two_mode, schedule, np.array([0.0]), 0.5, "B") == pytest.approx(math.log(0.5))
    assert classifier_logprob(single_1d(), schedule, np.array([3.0]), 0.5, "only") == pytest.approx(0.0, abs=1e-12)


def test_classifier_normalizes(all_worlds, schedule, rng):
    for world in all_worlds.values():
        x_t, t, _ = _random_state(world, rng)
        total = sum(math.exp(classifier_logprob(world, schedule, x_t, t, y)) for y in world.prompts)
        assert total == pytest.approx(1.0, abs=1e-12)
        probs = classifier_probs(world, schedule, x_t, t)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all((probs >= 0) & (probs <= 1))


def test_analytic_denoiser_minimizes_noise_regression(two_mode, schedule):
    """Shifting the exact predictor by a constant strictly increases the denoising loss"""
    rng = np.random.default_rng(7)
    n, t = 100_000, 0.5
    pooled = two_mode.pooled
    k = rng.choice(len(pooled.weights), size=n, p=pooled.weights)
    x = pooled.means[k] + np.sqrt(pooled.variances[k]) * rng.standard_normal((n, 1))
    eps = rng.standard_normal((n, 1))
    x_t = schedule.alpha(t) * x + schedule.sigma(t) * eps
    pred = eps_pred(two_mode, schedule, x_t, None, t)
    base = np.mean(np.sum((pred - eps) ** 2, axis=-1))
    for c in (0.1, -0.1):
        shifted = np.mean(np.sum((pred + c - eps) ** 2, axis=-1))
        assert shifted > base
