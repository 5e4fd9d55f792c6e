"""Damped Newton for ``f(lam(chi + ddbar u)) = psi exp(Lambda0 u)`` on the flat complex 2-torus.

The grid has ``N^4`` points with spacing ``1/N`` and axes ``(x1, y1, x2, y2)``.
The linearization ``L v = F^{i jbar} v_{i jbar} - Lambda0 psi e^{Lambda0 u} v``
is applied matrix-free and inverted by BiCGSTAB (GMRES as a fallback),
preconditioned in Fourier space by the constant-coefficient operator built
from the grid mean of ``F``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator, bicgstab, gmres

from .cones import relative_margin
from .newton import InitializationError, NonConvergenceError, damped_newton
from .operators import OperatorSpec, value
from .parallel import worker_count
from .pencil import (
    _assemble,
    apply_stencil,
    contract,
    contraction_stencil,
    discrete_complex_hessian,
    operator_derivative,
    pencil_eigen,
)

log = logging.getLogger(__name__)

N_COMPLEX = 2
LINEAR_RTOL = 1e-11


@dataclass(frozen=True)
class TorusProblem:
    N: int
    operator: OperatorSpec
    chi: Any                 # (2, 2) constant or (N, N, N, N, 2, 2) Hermitian field
    psi: Any                 # scalar or (N, N, N, N) positive field
    lambda0: float = 1.0
    tol: float = 1e-9

    def __post_init__(self):
        if self.operator.cone.n != N_COMPLEX:
            raise ValueError("the torus solver is two-dimensional (n = 2)")
        if self.N < 4:
            raise ValueError("grid needs N >= 4")
        if not self.lambda0 > 0:
            raise ValueError("Lambda0 must be positive")
        chi = np.asarray(self.chi, dtype=complex)
        if chi.shape not in ((2, 2), self.shape + (2, 2)):
            raise ValueError(f"chi must have shape (2, 2) or {self.shape + (2, 2)}")
        psi = np.broadcast_to(np.asarray(self.psi, dtype=float), self.shape)
        if np.any(psi <= 0):
            raise ValueError("psi must be positive")

    @property
    def shape(self) -> tuple:
        return (self.N,) * 4

    @property
    def h(self) -> float:
        return 1.0 / self.N

    def chi_field(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.chi, dtype=complex), self.shape + (2, 2))

    def psi_field(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.psi, dtype=float), self.shape)


def hessian_symbol(N: int, half: bool = False) -> np.ndarray:
    """Fourier symbol of :func:`discrete_complex_hessian`, shape ``(N, N, N, N, 2, 2)``.

    ``half=True`` keeps only the last-axis frequencies of a real transform.
    """
    h = 1.0 / N
    k = 2 * np.pi * np.fft.fftfreq(N, d=h)
    ks = [k.reshape([N if a == ax else 1 for a in range(4)]) for ax in range(4)]
    if half:
        ks[3] = ks[3][..., : N // 2 + 1]
    full = np.zeros((N,) * 3 + (N // 2 + 1 if half else N,))

    def d2(p, q):
        if p == q:
            return full - 4 * np.sin(ks[p] * h / 2) ** 2 / h**2
        return full - np.sin(ks[p] * h) * np.sin(ks[q] * h) / h**2

    return _assemble(d2)


class _Discretization:
    def __init__(self, p: TorusProblem):
        self.p = p
        self.chi = p.chi_field()
        self.psi = p.psi_field()
        self.symbol = hessian_symbol(p.N, half=True)
        self.workers = worker_count()
        self.eye = np.eye(2)

    def theta(self, u):
        return self.chi + discrete_complex_hessian(u)

    def evaluate(self, u):
        F, lam, fval = operator_derivative(self.p.operator, self.eye, self.theta(u), check=False)
        margin = float(np.min(relative_margin(self.p.operator.cone, lam)))
        if not margin > 0:
            return None, margin, None
        ex = self.psi * np.exp(self.p.lambda0 * u)
        return fval - ex, margin, (F, ex)

    def solve(self, u, state, rhs):
        F, ex = state
        shape = u.shape
        c = self.p.lambda0 * ex

        h = self.p.h
        stencil = contraction_stencil(F)

        def matvec(v):
            v = v.reshape(shape)
            return (apply_stencil(stencil, v, h) - c * v).ravel()

        sym = contract(F.mean(axis=(0, 1, 2, 3)), self.symbol) - c.mean()
        w = self.workers

        def precond(r):
            R = sfft.rfftn(r.reshape(shape), workers=w)
            return sfft.irfftn(R / sym, s=shape, workers=w).ravel()

        size = u.size
        A = LinearOperator((size, size), matvec=matvec, dtype=float)
        M = LinearOperator((size, size), matvec=precond, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = bicgstab(A, rhs.ravel(), rtol=LINEAR_RTOL, atol=0.0, M=M, maxiter=500, callback=cb)
        if info != 0:
            log.info("bicgstab returned %d; retrying with gmres", info)
            x, info = gmres(A, rhs.ravel(), rtol=LINEAR_RTOL, atol=0.0, M=M, restart=60,
                            maxiter=50, callback=cb, callback_type="pr_norm")
            if info != 0:
                raise NonConvergenceError(f"Krylov solve stagnated (info={info})")
        return x.reshape(shape), count[0]


def solve_torus(p: TorusProblem, initial=None, max_iter: int = 60):
    """Admissible solution on the grid and its :class:`SolveReport`.

    Starts from ``u = 0`` (admissible because ``chi`` is) unless ``initial``
    is given.
    """
    disc = _Discretization(p)
    u0 = np.zeros(p.shape) if initial is None else np.array(initial, dtype=float)
    if u0.shape != p.shape:
        raise ValueError(f"initial guess must have shape {p.shape}")
    lam, _ = pencil_eigen(disc.eye, disc.theta(u0))
    if np.min(relative_margin(p.operator.cone, lam)) <= 0:
        raise InitializationError("initial field is not admissible at every grid point")
    u, _, report = damped_newton(u0, disc.evaluate, disc.solve, tol=p.tol, max_iter=max_iter)
    return u, report


def residual(p: TorusProblem, u) -> np.ndarray:
    disc = _Discretization(p)
    lam, _ = pencil_eigen(disc.eye, disc.theta(np.asarray(u, dtype=float)))
    return value(p.operator, lam) - disc.psi * np.exp(p.lambda0 * u)
