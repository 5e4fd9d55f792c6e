import numpy as np
import pytest

from conekit.operators import SigmaKRoot, gradient, value
from conekit.pencil import (
    MetricError,
    UnsupportedGeometryError,
    apply_stencil,
    complex_gradient,
    contract,
    contraction_stencil,
    discrete_complex_hessian,
    eigh2,
    operator_derivative,
    pencil_eigen,
    spectral_complex_hessian,
    torus_coordinates,
)


def random_hermitian(rng, shape, n):
    A = rng.normal(size=shape + (n, n)) + 1j * rng.normal(size=shape + (n, n))
    return A + np.conj(np.swapaxes(A, -1, -2))


def random_metric(rng, n):
    B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return B @ B.conj().T + n * np.eye(n)


def test_pencil_examples():
    lam, _ = pencil_eigen(np.eye(3), np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(lam, [1.0, 2.0, 3.0])
    lam, _ = pencil_eigen(2 * np.eye(2), np.diag([4.0, 6.0]))
    np.testing.assert_allclose(lam, [2.0, 3.0])


@pytest.mark.parametrize("n", [2, 4])
def test_pencil_residual_and_normalization(n, rng):
    g = random_metric(rng, n)
    th = random_hermitian(rng, (), n)
    lam, V = pencil_eigen(g, th)
    assert np.abs(th @ V - g @ V * lam).max() <= 1e-10
    np.testing.assert_allclose(V.conj().T @ g @ V, np.eye(n), atol=1e-12)


def test_metric_error():
    with pytest.raises(MetricError):
        pencil_eigen(np.diag([1.0, -1.0]), np.eye(2))


def test_eigh2_matches_lapack(rng):
    A = random_hermitian(rng, (500,), 2)
    A[0] = np.eye(2)
    lam, U = eigh2(A)
    np.testing.assert_allclose(lam, np.linalg.eigvalsh(A), atol=1e-12)
    np.testing.assert_allclose(A @ U, U * lam[..., None, :], atol=1e-12)


def test_operator_derivative_trace_operator(rng):
    g = random_metric(rng, 3)
    th = g @ np.diag([1.0, 2.0, 3.0])
    th = 0.5 * (th + th.conj().T) + 5 * g
    F, _, _ = operator_derivative(SigmaKRoot(1, 3), g, th)
    np.testing.assert_allclose(F, np.linalg.inv(g), atol=1e-12)


def test_operator_derivative_log_det():
    lam = np.array([1.0, 2.0, 4.0])
    f = SigmaKRoot(3, 3)
    F, _, fval = operator_derivative(f, np.eye(3), np.diag(lam))
    np.testing.assert_allclose(F, np.diag(fval / (3 * lam)), atol=1e-14)


def test_operator_derivative_isotropic():
    f = SigmaKRoot(2, 3)
    F, _, _ = operator_derivative(f, np.eye(3), np.eye(3))
    np.testing.assert_allclose(F, gradient(f, np.ones(3))[0] * np.eye(3), atol=1e-14)


def test_operator_derivative_is_directional_derivative(rng):
    f = SigmaKRoot(2, 3)
    g = random_metric(rng, 3)
    th = 4 * g + 0.3 * random_hermitian(rng, (), 3)
    dth = random_hermitian(rng, (), 3)
    F, _, _ = operator_derivative(f, g, th)
    h = 1e-6
    lp, _ = pencil_eigen(g, th + h * dth)
    lm, _ = pencil_eigen(g, th - h * dth)
    fd = (value(f, lp) - value(f, lm)) / (2 * h)
    assert contract(F, dth) == pytest.approx(fd, rel=1e-7)


def test_operator_derivative_frame_independent(rng):
    # a rotated frame inside a repeated eigenvalue leaves F unchanged
    f = SigmaKRoot(3, 3)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    th = Q @ np.diag([1.0, 1.0, 3.0]) @ Q.conj().T
    F, _, _ = operator_derivative(f, np.eye(3), th)
    expected = Q @ np.diag(gradient(f, [1.0, 1.0, 3.0])) @ Q.conj().T
    np.testing.assert_allclose(F, expected, atol=1e-12)


def test_hessian_quadratic_and_bilinear():
    N = 8
    x1, y1, x2, y2 = torus_coordinates(N)
    inner = (slice(2, -2),) * 4
    u = np.broadcast_to(x1 ** 2, (N,) * 4)
    H = discrete_complex_hessian(u)[inner]
    np.testing.assert_allclose(H[..., 0, 0], 0.5)
    np.testing.assert_allclose(H[..., 0, 1], 0.0, atol=1e-12)
    u = np.broadcast_to(x1 * y2, (N,) * 4)
    H = discrete_complex_hessian(u)[inner]
    np.testing.assert_allclose(H[..., 0, 1], 0.25j, atol=1e-12)
    np.testing.assert_allclose(H[..., 1, 0], -0.25j, atol=1e-12)


def test_hessian_second_order():
    errs = []
    for N in (8, 16, 32):
        x1 = torus_coordinates(N)[0]
        u = np.broadcast_to(np.sin(2 * np.pi * x1), (N,) * 4)
        exact = -np.pi ** 2 * np.sin(2 * np.pi * x1)
        errs.append(np.abs(discrete_complex_hessian(u)[..., 0, 0] - exact).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.8) & (ratios < 4.2))


def test_spectral_hessian_exact():
    N = 8
    x1, y1, x2, y2 = torus_coordinates(N)
    u = np.broadcast_to(np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * y2), (N,) * 4)
    H = spectral_complex_hessian(u)
    # u_{1 2bar} = (u_{x1 x2} + u_{y1 y2})/4 + i (u_{x1 y2} - u_{y1 x2})/4
    expected = 0.25j * (-(2 * np.pi) ** 2) * np.cos(2 * np.pi * x1) * np.sin(2 * np.pi * y2)
    np.testing.assert_allclose(H[..., 0, 1], np.broadcast_to(expected, (N,) * 4), atol=1e-10)


def test_stencil_matches_contraction(rng):
    N = 6
    u = rng.normal(size=(N,) * 4)
    F = random_hermitian(rng, (N,) * 4, 2)
    np.testing.assert_allclose(apply_stencil(contraction_stencil(F), u, 1 / N),
                               contract(F, discrete_complex_hessian(u)), atol=1e-10)


def test_complex_gradient():
    N = 8
    x1, y1, x2, y2 = torus_coordinates(N)
    u = np.broadcast_to(np.sin(2 * np.pi * y1), (N,) * 4)
    g = complex_gradient(u)
    np.testing.assert_allclose(g[..., 0], np.broadcast_to(-0.5j * 2 * np.pi * np.cos(2 * np.pi * y1), (N,) * 4),
                               atol=1e-10)


def test_unsupported_geometry():
    with pytest.raises(UnsupportedGeometryError):
        discrete_complex_hessian(np.zeros((4, 4, 4, 5)))
