import numpy as np
import pytest

from config import GeneratorKind
from errors import CameraIndexError, DomainError
from generator import Camera, Generator, GeneratorParams, pullback, render
from presets import random_orthonormal_cameras


@pytest.fixture
def affine():
    return Generator.affine([Camera([[2.0, 0.0], [0.0, 0.5]], [1.0, 0.0])])


@pytest.fixture
def random_generator():
    rng = np.random.default_rng(3)
    cams = [Camera(rng.normal(size=(3, 4)), rng.normal(size=3)) for _ in range(3)]
    return Generator.affine(cams)


def test_identity_render():
    g = Generator.identity(2)
    assert g.kind is GeneratorKind.IDENTITY and g.num_cameras == 1
    np.testing.assert_array_equal(render(g, GeneratorParams([1.0, 2.0]), 0), [1.0, 2.0])


def test_degenerate_affine_matches_identity():
    g = Generator.affine([Camera(np.eye(2), np.zeros(2))])
    theta = np.array([0.3, -0.7])
    np.testing.assert_array_equal(render(g, theta, 0), render(Generator.identity(2), theta, 0))


def test_affine_render_and_pullback(affine):
    np.testing.assert_allclose(render(affine, np.array([3.0, 4.0]), 0), [7.0, 2.0])
    np.testing.assert_allclose(pullback(affine, 0, np.array([1.0, 1.0])), [2.0, 0.5])


def test_identity_pullback_is_copy():
    g = Generator.identity(3)
    delta = np.array([1.0, -2.0, 0.5])
    out = pullback(g, 0, delta)
    np.testing.assert_array_equal(out, delta)
    assert out is not delta


def test_camera_index_errors(affine):
    with pytest.raises(CameraIndexError):
        render(affine, np.zeros(2), 1)
    with pytest.raises(CameraIndexError):
        pullback(Generator.identity(1), 1, np.zeros(1))


def test_dimension_errors(affine):
    with pytest.raises(DomainError):
        pullback(affine, 0, np.zeros(3))
    with pytest.raises(DomainError):
        render(affine, np.zeros(3), 0)
    with pytest.raises(DomainError):
        Generator.affine([Camera(np.eye(2), np.zeros(2)), Camera(np.eye(3), np.zeros(3))])
    with pytest.raises(DomainError):
        Generator.affine([])


def test_camera_rejects_ragged_or_non_finite_matrix():
    with pytest.raises(DomainError):
        Camera([[1.0], [1.0, 2.0]], [0.0, 0.0])
    with pytest.raises(DomainError):
        Camera([[1.0, float("nan")]], [0.0])
    with pytest.raises(DomainError):
        Camera([[1.0, 0.0]], [0.0, 0.0])


def test_adjoint_identity(random_generator):
    rng = np.random.default_rng(11)
    for c in range(random_generator.num_cameras):
        matrix = random_generator.camera(c).matrix
        for _ in range(20):
            u, v = rng.normal(size=4), rng.normal(size=3)
            assert np.dot(matrix @ u, v) == pytest.approx(np.dot(u, pullback(random_generator, c, v)), abs=1e-12)


def test_pullback_matches_directional_derivative(random_generator):
    rng = np.random.default_rng(5)
    h = 1e-6
    for c in range(random_generator.num_cameras):
        theta, v, delta = rng.normal(size=4), rng.normal(size=4), rng.normal(size=3)
        fd = np.dot(render(random_generator, theta + h * v, c) - render(random_generator, theta, c), delta) / h
        assert fd == pytest.approx(np.dot(v, pullback(random_generator, c, delta)), rel=1e-5)


def test_render_is_affine(random_generator):
    rng = np.random.default_rng(9)
    t1, t2 = rng.normal(size=4), rng.normal(size=4)
    for c in range(random_generator.num_cameras):
        lhs = render(random_generator, t1 + t2, c) - render(random_generator, t2, c)
        rhs = render(random_generator, t1, c) - render(random_generator, np.zeros(4), c)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_params_finiteness():
    params = GeneratorParams([0.0, 1.0])
    assert params.is_finite()
    snap = params.snapshot()
    params.theta[0] = np.nan
    assert not params.is_finite()
    assert snap[0] == 0.0


def test_orthonormal_cameras_are_orthogonal():
    cams = random_orthonormal_cameras(3, 2, seed=4)
    for cam in cams:
        np.testing.assert_allclose(cam.matrix.T @ cam.matrix, np.eye(2), atol=1e-12)
        np.testing.assert_array_equal(cam.offset, 0.0)
