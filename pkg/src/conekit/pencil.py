"""Hermitian pencils, complex Hessians on flat tori, and the linearized operator.

Fields of Hermitian forms are arrays of shape ``(..., n, n)``; all routines
broadcast over the leading grid axes.  Torus grid functions have shape
``(N, N, N, N)`` with axes ordered ``(x1, y1, x2, y2)`` and spacing ``1/N``.
"""
from __future__ import annotations

import numpy as np

from .operators import OperatorSpec, _domain_check, value_and_gradient

CLUSTER_RTOL = 1e-8


class MetricError(np.linalg.LinAlgError):
    """The background metric is not positive definite."""


class UnsupportedGeometryError(ValueError):
    pass


def is_hermitian(H, rtol: float = 1e-13) -> bool:
    H = np.asarray(H)
    scale = np.max(np.abs(H)) if H.size else 0.0
    return bool(np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))), initial=0.0) <= rtol * max(scale, 1.0))


def eigh2(A) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``eigh`` for batches of 2x2 Hermitian matrices.

    Writes ``A = m I + r R(theta, phi)`` with ``R`` a reflection; the frame is
    smooth in the entries and exact at coincident eigenvalues.
    """
    a = np.real(A[..., 0, 0])
    d = np.real(A[..., 1, 1])
    b = A[..., 0, 1]
    m = 0.5 * (a + d)
    half = 0.5 * (a - d)
    ab = np.abs(b)
    r = np.hypot(half, ab)
    th = 0.5 * np.arctan2(ab, half)
    ph = np.exp(1j * np.angle(b))
    c, s = np.cos(th), np.sin(th)
    lam = np.stack([m - r, m + r], axis=-1)
    U = np.empty(A.shape, dtype=complex)
    U[..., 0, 0] = -s * ph
    U[..., 1, 0] = c
    U[..., 0, 1] = c * ph
    U[..., 1, 1] = s
    return lam, U


def pencil_eigen(g, theta) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and g-orthonormal frames of ``g^{-1} theta``.

    Reduces by the Cholesky factor ``g = L L^*``: the Hermitian matrix
    ``L^{-1} theta L^{-*}`` is diagonalized and its eigenvectors mapped back
    by ``L^{-*}``.  Columns ``v_p`` satisfy ``theta v_p = lam_p g v_p`` and
    ``v_p^* g v_q = delta_pq``.
    """
    g = np.asarray(g, dtype=complex)
    theta = np.asarray(theta, dtype=complex)
    if g.ndim == 2 and np.array_equal(g, np.eye(g.shape[0])):
        A = 0.5 * (theta + np.conj(np.swapaxes(theta, -1, -2)))
        return eigh2(A) if A.shape[-1] == 2 else np.linalg.eigh(A)
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise MetricError("background metric is not positive definite") from exc
    Linv = np.linalg.inv(L)
    LinvH = np.conj(np.swapaxes(Linv, -1, -2))
    A = Linv @ theta @ LinvH
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    lam, U = eigh2(A) if A.shape[-1] == 2 else np.linalg.eigh(A)
    return lam, LinvH @ U


def _cluster_average(lam: np.ndarray, fp: np.ndarray) -> np.ndarray:
    # consecutive sorted eigenvalues closer than the tolerance share a cluster
    gaps = np.diff(lam, axis=-1)
    tol = CLUSTER_RTOL * (1.0 + np.abs(lam[..., 1:]))
    new = np.concatenate([np.zeros(lam.shape[:-1] + (1,), dtype=int),
                          (gaps > tol).astype(int)], axis=-1)
    gid = np.cumsum(new, axis=-1)
    same = gid[..., :, None] == gid[..., None, :]
    return (same * fp[..., None, :]).sum(-1) / same.sum(-1)


def operator_derivative(f: OperatorSpec, g, theta, *, check: bool = True):
    """``F^{i jbar} = sum_p f_p(lam) v_p v_p^*`` for the pencil ``(g, theta)``.

    With this normalization ``Re tr(F dtheta)`` is the derivative of
    ``f(lam(g^{-1}(theta + t dtheta)))`` at t = 0.  Gradient entries are
    averaged over eigenvalue clusters so the result does not depend on the
    choice of frame inside a cluster.

    Returns ``(F, lam, fval)``.
    """
    lam, V = pencil_eigen(g, theta)
    if check:
        _domain_check(f, lam)
    fval, fp = value_and_gradient(f, lam, check=False)
    fp = _cluster_average(lam, fp)
    F = (V * fp[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    return F, lam, fval


def contract(F, H) -> np.ndarray:
    """``sum_ij F^{i jbar} H_{i jbar}`` as ``Re tr(F H)``."""
    return np.real(np.einsum("...ij,...ji->...", F, H))


# --------------------------------------------------------------------------
# complex Hessians on the flat 2-torus (real dimension 4)
# --------------------------------------------------------------------------


def _check_torus(u) -> int:
    u = np.asarray(u)
    if u.ndim != 4 or len(set(u.shape)) != 1:
        raise UnsupportedGeometryError("torus fields must be (N, N, N, N) on a uniform grid")
    return u.shape[0]


def _d2(u, a, b, h):
    if a == b:
        return (np.roll(u, -1, a) - 2 * u + np.roll(u, 1, a)) / h**2
    up = np.roll(u, -1, a)
    dn = np.roll(u, 1, a)
    return (np.roll(up, -1, b) - np.roll(up, 1, b) - np.roll(dn, -1, b) + np.roll(dn, 1, b)) / (4 * h**2)


def _assemble(d2) -> np.ndarray:
    # d2(p, q) returns the real second derivative along axes p, q
    x = (0, 2)
    y = (1, 3)
    H = np.empty(d2(0, 0).shape + (2, 2), dtype=complex)
    for i in range(2):
        for j in range(i, 2):
            re = 0.25 * (d2(x[i], x[j]) + d2(y[i], y[j]))
            im = 0.25 * (d2(x[i], y[j]) - d2(y[i], x[j]))
            H[..., i, j] = re + 1j * im
            if i != j:
                H[..., j, i] = re - 1j * im
    return H


def contraction_stencil(F) -> dict:
    """Real coefficients ``c_pq`` with ``Re tr(F ddbar v) = sum c_pq v_{pq}``.

    Keys are pairs of real axes ``(p, q)``, ``p <= q``; ``x_i y_i`` terms cancel.
    """
    re12 = np.real(F[..., 0, 1])
    im12 = np.imag(F[..., 0, 1])
    f11 = 0.25 * np.real(F[..., 0, 0])
    f22 = 0.25 * np.real(F[..., 1, 1])
    return {
        (0, 0): f11, (1, 1): f11, (2, 2): f22, (3, 3): f22,
        (0, 2): 0.5 * re12, (1, 3): 0.5 * re12,
        (1, 2): -0.5 * im12, (0, 3): 0.5 * im12,
    }


def apply_stencil(coeffs: dict, v, h: float) -> np.ndarray:
    """``sum c_pq v_{pq}`` with the same central differences as :func:`discrete_complex_hessian`."""
    out = np.zeros_like(v)
    first = {}
    for (p, q), c in coeffs.items():
        if p == q:
            out += c * _d2(v, p, p, h)
            continue
        if p not in first:
            first[p] = (np.roll(v, -1, p) - np.roll(v, 1, p)) / (2 * h)
        dp = first[p]
        out += c * ((np.roll(dp, -1, q) - np.roll(dp, 1, q)) / (2 * h))
    return out


def discrete_complex_hessian(u, h: float | None = None) -> np.ndarray:
    """``u_{i jbar}`` by second-order central differences on the periodic grid.

    ``u_{i jbar} = (u_{x_i x_j} + u_{y_i y_j})/4 + i (u_{x_i y_j} - u_{y_i x_j})/4``.
    """
    N = _check_torus(u)
    h = 1.0 / N if h is None else h
    cache = {}

    def d2(p, q):
        key = (min(p, q), max(p, q))
        if key not in cache:
            cache[key] = _d2(u, key[0], key[1], h)
        return cache[key]

    return _assemble(d2)


def _wavenumbers(N: int, L: float = 1.0) -> np.ndarray:
    k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
    if N % 2 == 0:
        k_nyq = k.copy()
        k_nyq[N // 2] = 0.0
        return k_nyq
    return k


def spectral_derivative(u, orders) -> np.ndarray:
    """Fourier derivative; ``orders`` is a length-4 tuple of derivative counts."""
    N = _check_torus(u)
    k = _wavenumbers(N)
    U = np.fft.fftn(u)
    for ax, m in enumerate(orders):
        if m:
            shape = [1, 1, 1, 1]
            shape[ax] = N
            U = U * ((1j * k) ** m).reshape(shape)
    return np.real(np.fft.ifftn(U))


def spectral_complex_hessian(u) -> np.ndarray:
    """``u_{i jbar}`` with Fourier differentiation (exact for resolved trigonometric fields)."""
    N = _check_torus(u)
    k = _wavenumbers(N)
    U = np.fft.fftn(u)
    ks = [k.reshape([N if a == ax else 1 for a in range(4)]) for ax in range(4)]

    def d2(p, q):
        return np.real(np.fft.ifftn(-ks[p] * ks[q] * U))

    return _assemble(d2)


def complex_gradient(u, spectral: bool = True) -> np.ndarray:
    """``(du/dz_1, du/dz_2)`` with ``d/dz = (d/dx - i d/dy)/2``; shape ``(..., 2)``."""
    N = _check_torus(u)
    if spectral:
        dx = [spectral_derivative(u, tuple(int(a == ax) for a in range(4))) for ax in range(4)]
    else:
        h = 1.0 / N
        dx = [(np.roll(u, -1, ax) - np.roll(u, 1, ax)) / (2 * h) for ax in range(4)]
    return np.stack([0.5 * (dx[0] - 1j * dx[1]), 0.5 * (dx[2] - 1j * dx[3])], axis=-1)


def torus_coordinates(N: int) -> tuple[np.ndarray, ...]:
    """Open grid ``(x1, y1, x2, y2)`` on ``[0, 1)^4`` with spacing 1/N."""
    s = np.arange(N) / N
    return np.meshgrid(s, s, s, s, indexing="ij", sparse=True)
