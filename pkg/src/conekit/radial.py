"""Radial reduction on the annulus ``t0 <= |z|^2 <= 1``.

For ``u = phi(|z|^2)`` and ``chi = c * omega`` the eigenvalues of
``chi + ddbar u`` are ``c + phi'`` (n-1 times) and ``c + phi' + t phi''``,
so the equation ``f(lam) = psi exp(Lambda0 u)`` becomes a two-point boundary
value problem in ``t``.  The distance to the outer sphere is
``sigma = 1 - sqrt(t)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
from scipy.linalg import solve_banded

from .cones import relative_margin
from .newton import InitializationError, NonConvergenceError, SolveReport, damped_newton
from .operators import OperatorSpec, value, value_and_gradient

log = logging.getLogger(__name__)

DEFAULT_T0 = 0.04
COLLAR_FRACTION = 0.2


@dataclass(frozen=True)
class Dirichlet:
    inner: float
    outer: float


@dataclass(frozen=True)
class Exhaustion:
    k_schedule: tuple


@dataclass(frozen=True)
class RadialProblem:
    n: int
    operator: OperatorSpec
    psi: Union[float, Callable]
    lambda0: float = 1.0
    chi: float = 0.0
    points: int = 128
    t0: float = DEFAULT_T0
    boundary: Union[Dirichlet, Exhaustion] = Dirichlet(0.0, 0.0)
    tol: float = 1e-10

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("radial grid needs at least 3 points")
        if not self.lambda0 > 0:
            raise ValueError("Lambda0 must be positive")
        if not 0 < self.t0 < 1:
            raise ValueError("t0 must lie in (0, 1)")
        if self.operator.cone.n != self.n:
            raise ValueError("operator dimension does not match n")
        if np.any(self.psi_values() <= 0):
            raise ValueError("psi must be positive on the grid")

    @property
    def cone(self):
        return self.operator.cone

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.t0, 1.0, self.points + 1)

    @property
    def h(self) -> float:
        return (1.0 - self.t0) / self.points

    def psi_values(self, t=None) -> np.ndarray:
        t = self.grid if t is None else t
        if callable(self.psi):
            return np.broadcast_to(np.asarray(self.psi(t), dtype=float), np.shape(t)).copy()
        return np.full(np.shape(t), float(self.psi))


def sigma_of_t(t) -> np.ndarray:
    return 1.0 - np.sqrt(t)


def _radial_lam(phi1, phi2, t, c, n) -> np.ndarray:
    # unsorted: the last entry is the radial direction
    base = c + np.asarray(phi1, dtype=float)
    last = base + np.asarray(t) * np.asarray(phi2)
    base, last = np.broadcast_arrays(base, last)
    return np.concatenate([np.repeat(base[..., None], n - 1, axis=-1), last[..., None]], axis=-1)


def radial_eigenvalues(phi1, phi2, t, c, n: int = 2) -> np.ndarray:
    """Sorted eigenvalues of ``c*I + ddbar[phi(|z|^2)]`` at ``|z|^2 = t``."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    return np.sort(_radial_lam(phi1, phi2, t, c, n), axis=-1)


def radial_hessian_matrix(phi1: float, phi2: float, z) -> np.ndarray:
    """Full ``n x n`` complex Hessian ``phi' delta_ij + phi'' conj(z_i) z_j``."""
    z = np.asarray(z, dtype=complex)
    return phi1 * np.eye(z.size) + phi2 * np.outer(np.conj(z), z)


def derivatives(phi: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Central first and second differences at the interior nodes."""
    d1 = (phi[2:] - phi[:-2]) / (2 * h)
    d2 = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h**2
    return d1, d2


class _Discretization:
    def __init__(self, p: RadialProblem, psi: np.ndarray | None = None):
        self.p = p
        self.t = p.grid
        self.ti = self.t[1:-1]
        self.h = p.h
        self.psi = p.psi_values() if psi is None else psi
        self.psi_i = self.psi[1:-1]

    def spectra(self, phi):
        d1, d2 = derivatives(phi, self.h)
        return _radial_lam(d1, d2, self.ti, self.p.chi, self.p.n)

    def evaluate(self, phi):
        lam = self.spectra(phi)
        margin = float(np.min(relative_margin(self.p.cone, lam)))
        if not margin > 0:
            return None, margin, None
        fval, g = value_and_gradient(self.p.operator, lam, check=False)
        rhs = self.psi_i * np.exp(self.p.lambda0 * phi[1:-1])
        return fval - rhs, margin, (g, rhs)

    def solve(self, phi, state, rhs):
        g, ex = state
        h, t = self.h, self.ti
        S = g.sum(axis=-1)
        G = g[..., -1]
        upper = S / (2 * h) + t * G / h**2
        lower = -S / (2 * h) + t * G / h**2
        diag = -2 * t * G / h**2 - self.p.lambda0 * ex
        m = diag.size
        ab = np.zeros((3, m))
        ab[0, 1:] = upper[:-1]
        ab[1] = diag
        ab[2, :-1] = lower[1:]
        step = np.zeros_like(phi)
        step[1:-1] = solve_banded((1, 1), ab, rhs)
        return step, 1


def _boundary_values(p: RadialProblem) -> tuple[float, float]:
    if isinstance(p.boundary, Dirichlet):
        return p.boundary.inner, p.boundary.outer
    raise TypeError("Dirichlet boundary data required")


def _trace_profile(t, n):
    # w' = 1 - (s/t)^n with w(t0) = w(1) = 0 keeps trace(ddbar w) = n
    t0 = t[0]
    if n == 1:
        return np.zeros_like(t)
    sn = (n - 1) * (1 - t0) / (t0 ** (1 - n) - 1)
    w = t + sn * t ** (1 - n) / (n - 1)
    return w - (w[0] + (w[-1] - w[0]) * (t - t0) / (1 - t0))


def initial_guess(p: RadialProblem) -> np.ndarray:
    """Affine interpolant of the boundary data, or that plus ``A w`` with A grown.

    ``w`` vanishes at both ends and has ``trace(ddbar w) = n``; A doubles until
    the guess is admissible.
    """
    inner, outer = _boundary_values(p)
    t = p.grid
    disc = _Discretization(p)
    affine = inner + (outer - inner) * (t - p.t0) / (1 - p.t0)
    if disc.evaluate(affine)[1] > 0:
        return affine
    w = _trace_profile(t, p.n)
    A = 1.0
    while A < 2.0**40:
        guess = affine + A * w
        if disc.evaluate(guess)[1] > 0:
            return guess
        A *= 2
    raise InitializationError("no admissible initial guess found for the radial problem")


def solve_radial_dirichlet(p: RadialProblem, initial: np.ndarray | None = None,
                           continuation=(0.25, 0.5, 0.75, 1.0)):
    """Damped Newton for the radial Dirichlet problem.

    Returns ``(phi, report)`` with ``phi`` on ``p.grid`` (boundary nodes included).
    Falls back to continuation in ``psi`` from the value the initial guess
    solves exactly when plain Newton stagnates.
    """
    inner, outer = _boundary_values(p)
    phi0 = initial_guess(p) if initial is None else np.asarray(initial, dtype=float).copy()
    phi0[0], phi0[-1] = inner, outer
    disc = _Discretization(p)
    try:
        phi, _, report = damped_newton(phi0, disc.evaluate, disc.solve, tol=p.tol)
        return phi, report
    except NonConvergenceError as exc:
        log.info("radial newton stalled (%s); switching to continuation in psi", exc)
    lam0 = disc.spectra(phi0)
    psi_init = p.psi_values().copy()
    psi_init[1:-1] = value(p.operator, lam0) * np.exp(-p.lambda0 * phi0[1:-1])
    phi = phi0
    report = SolveReport()
    for s in continuation:
        psi_s = (1 - s) * psi_init + s * p.psi_values()
        d = _Discretization(p, psi_s)
        phi, _, report = damped_newton(phi, d.evaluate, d.solve, tol=p.tol, report=SolveReport())
        report.continuation.append(s)
    report.continuation = list(continuation)
    return phi, report


def residual(p: RadialProblem, phi) -> np.ndarray:
    """Discrete residual ``f(lam) - psi exp(Lambda0 phi)`` at interior nodes."""
    disc = _Discretization(p)
    lam = disc.spectra(np.asarray(phi, dtype=float))
    return value(p.operator, lam) - disc.psi_i * np.exp(p.lambda0 * np.asarray(phi)[1:-1])


def all_iterates_admissible(report: SolveReport) -> bool:
    return all(m > 0 for m in report.margin_history)


# --------------------------------------------------------------------------
# exhaustion by boundary data 2 log k
# --------------------------------------------------------------------------

@dataclass
class ExhaustionResult:
    t: np.ndarray
    ks: list
    solutions: list
    reports: list
    monotone_min: list           # min(phi_(next) - phi_(prev)) per consecutive pair
    cauchy: list                 # sup over the middle third of |phi_(k) - phi_(k')|
    band_width: float            # spread of u_(kmax) + 2 log sigma on the outer collar
    C0: float                    # -min(u_(kmax) + 2 log sigma) on the collar
    resolved_band_width: float   # same spread restricted to sigma >= 1/kmax
    resolved_C0: float
    collar: np.ndarray = field(repr=False, default=None)

    @property
    def monotone(self) -> bool:
        return all(m >= -1e-9 for m in self.monotone_min)

    def to_json(self) -> dict:
        return {
            "ks": self.ks,
            "monotone_min": self.monotone_min,
            "monotone": self.monotone,
            "cauchy": self.cauchy,
            "band_width": self.band_width,
            "C0": self.C0,
            "resolved_band_width": self.resolved_band_width,
            "resolved_C0": self.resolved_C0,
            "iterations": [r.iterations for r in self.reports],
            "residuals": [r.residual for r in self.reports],
        }


def outer_collar(t: np.ndarray, fraction: float = COLLAR_FRACTION) -> np.ndarray:
    """Indices of the last ``fraction`` of interior nodes next to ``t = 1``."""
    interior = np.arange(1, t.size - 1)
    m = max(1, int(round(fraction * interior.size)))
    return interior[-m:]


def solve_radial_exhaustion(p: RadialProblem, k_list=None) -> ExhaustionResult:
    """Dirichlet solves with boundary value ``2 log k`` on both spheres, warm-started.

    The residual tolerance is scaled by ``k^(2 Lambda0)``, the size of
    ``exp(Lambda0 u)`` at the boundary, so it stays above roundoff.

    For finite k the solution saturates at ``2 log k`` once ``sigma`` drops
    below roughly ``1/k``, so ``u + 2 log sigma`` necessarily falls off like
    ``2 log(k sigma)`` there.  Besides the band over the whole outer collar the
    result reports the band over collar nodes with ``sigma >= 1/kmax``.
    """
    if k_list is None:
        if not isinstance(p.boundary, Exhaustion):
            raise TypeError("pass k_list or an Exhaustion boundary")
        k_list = p.boundary.k_schedule
    ks = [int(k) for k in k_list]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("k schedule must be increasing")
    t = p.grid
    sols, reports = [], []
    prev = None
    prev_k = None
    for k in ks:
        bv = 2 * np.log(k)
        pk = replace(p, boundary=Dirichlet(bv, bv), tol=p.tol * k ** (2 * p.lambda0))
        init = None if prev is None else prev + (bv - 2 * np.log(prev_k))
        phi, rep = solve_radial_dirichlet(pk, initial=init)
        sols.append(phi)
        reports.append(rep)
        prev, prev_k = phi, k
    mono = [float(np.min(b - a)) for a, b in zip(sols, sols[1:])]
    third = slice(t.size // 3, 2 * t.size // 3)
    cauchy = [float(np.max(np.abs(b[third] - a[third]))) for a, b in zip(sols, sols[1:])]
    collar = outer_collar(t)
    sig = sigma_of_t(t[collar])
    prof = sols[-1][collar] + 2 * np.log(sig)
    resolved = prof[sig >= 1.0 / ks[-1]]
    if resolved.size == 0:
        resolved = prof[:1]
    return ExhaustionResult(
        t=t, ks=ks, solutions=sols, reports=reports, monotone_min=mono, cauchy=cauchy,
        band_width=float(np.ptp(prof)), C0=float(-prof.min()),
        resolved_band_width=float(np.ptp(resolved)), resolved_C0=float(-resolved.min()),
        collar=collar,
    )


# --------------------------------------------------------------------------
# barrier and completeness diagnostics
# --------------------------------------------------------------------------

def barrier_derivatives(t, k: float, delta: float):
    """``w = 2 log(delta^2 / (delta^2 + k sigma))`` and its t-derivatives."""
    t = np.asarray(t, dtype=float)
    s = sigma_of_t(t)
    s1 = -0.5 * t ** -0.5
    s2 = 0.25 * t ** -1.5
    D = delta**2 + k * s
    w = 2 * np.log(delta**2 / D)
    w1 = -2 * k * s1 / D
    w2 = -2 * k * s2 / D + 2 * (k * s1) ** 2 / D**2
    return w, w1, w2


@dataclass
class BarrierMargin:
    k: float
    delta: float
    min_margin: float | None
    margin: np.ndarray | None
    inadmissible: np.ndarray
    t: np.ndarray

    @property
    def certified(self) -> bool:
        return self.min_margin is not None and self.min_margin > 0


def barrier_margin(p: RadialProblem, k: float, delta: float, phi_bdry: float | None = None,
                   samples: int = 400) -> BarrierMargin:
    """Evaluate ``f(lam(chi + ddbar(w + phi))) - psi exp(Lambda0 (w + phi))`` on ``sigma < delta``.

    ``phi`` is the constant boundary value (``2 log k`` by default, the
    exhaustion data).  ``k = 0`` switches the barrier off.
    """
    if phi_bdry is None:
        phi_bdry = 2 * np.log(k) if k > 0 else 0.0
    s = np.linspace(0.0, delta, samples + 1)[1:]
    s = s[s < delta]
    t = (1 - s) ** 2
    t = t[t >= p.t0]
    w, w1, w2 = barrier_derivatives(t, k, delta) if k > 0 else (0 * t, 0 * t, 0 * t)
    lam = _radial_lam(w1, w2, t, p.chi, p.n)
    ok = relative_margin(p.cone, lam) > 0
    if not np.all(ok):
        return BarrierMargin(k, delta, None, None, t[~ok], t)
    m = value(p.operator, lam) - p.psi_values(t) * np.exp(p.lambda0 * (w + phi_bdry))
    return BarrierMargin(k, delta, float(m.min()), m, np.array([]), t)


@dataclass
class CompletenessFit:
    slope: float
    sigma_min: np.ndarray
    length: np.ndarray


def completeness_integral(t, phi, delta: float = 0.2, sigma_floor: float | None = None) -> CompletenessFit:
    """Length ``L(s) = int_s^delta exp(u/2) dsigma`` against ``log(1/s)``.

    The trapezoid rule runs over grid nodes with ``sigma_floor <= sigma <= delta``;
    the reported slope is the least-squares fit of L on ``log(1/s)``.  A slope
    bounded away from zero signals logarithmic divergence (a complete metric).
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = sigma_of_t(t)
    keep = (s <= delta) & (s > 0)
    if sigma_floor is not None:
        keep &= s >= sigma_floor
    s, u = s[keep], phi[keep]
    order = np.argsort(s)
    s, u = s[order], u[order]
    integrand = np.exp(u / 2)
    # cumulative integral from each s up to delta
    seg = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(s)
    L = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    sel = slice(0, -1)
    slope = np.polyfit(np.log(1 / s[sel]), L[sel], 1)[0]
    return CompletenessFit(float(slope), s[sel], L[sel])
