"""Curvature equations rewritten in the standard form ``f(lam(chi + ddbar u)) = psi exp(Lambda0 u)``.

For the conformal metric ``e^u omega`` the mixed Chern-Ricci form satisfies

    -Ric<a,b,g>(e^u omega) = b (Delta u) omega + (n a + 2 g) ddbar u - Ric<a,b,g>(omega),

so prescribing ``f(lam(-(e^u omega)^{-1} Ric))`` turns into an equation of the
shape ``f(lam(chi + Delta u omega - rho ddbar u)) = psi exp(s (u - log b))``.
The flat-torus helpers recompute Chern-Ricci and Chern scalar curvature of
``e^u omega`` from a grid field for round-trip checks.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .cones import Cone, varrho
from .pencil import (
    _check_torus,
    complex_gradient,
    discrete_complex_hessian,
    spectral_complex_hessian,
)

N_TORUS = 2


class Regime(str, enum.Enum):
    UNIFORMLY_ELLIPTIC = "UniformlyElliptic"
    LIMITING = "Limiting"
    INADMISSIBLE = "Inadmissible"


@dataclass(frozen=True)
class MixedRicciParams:
    alpha: float
    beta: float
    gamma: float
    n: int

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass(frozen=True)
class ReducedProblem:
    rho: float | None                  # coefficient of -ddbar u next to (Delta u) omega; None for the direct form
    chi_shift: Any = field(default=0.0, repr=False)
    exponent_shift: float = 0.0
    lambda0: float = 1.0
    regime: Regime = Regime.UNIFORMLY_ELLIPTIC
    pure_laplacian: bool = False

    def to_json(self) -> dict:
        chi = np.asarray(self.chi_shift)
        out = {
            "rho": self.rho,
            "exponent_shift": self.exponent_shift,
            "lambda0": self.lambda0,
            "regime": self.regime.value,
            "pure_laplacian": self.pure_laplacian,
        }
        if chi.ndim == 0:
            out["chi_shift"] = float(chi)
        elif chi.ndim == 2:
            out["chi_shift"] = {"re": np.real(chi).tolist(), "im": np.imag(chi).tolist()}
        else:
            out["chi_shift_shape"] = list(chi.shape)
        return out


def classify_regime(rho: float, rho_gamma: float, atol: float = 1e-12) -> Regime:
    if rho == 0:
        return Regime.INADMISSIBLE
    if abs(rho - rho_gamma) <= atol * max(1.0, abs(rho_gamma)):
        return Regime.LIMITING
    return Regime.UNIFORMLY_ELLIPTIC if rho < rho_gamma else Regime.INADMISSIBLE


def reduce_mixed(p: MixedRicciParams, cone: Cone, *, ric=0.0, sigma_deg: float = 1.0) -> ReducedProblem:
    """Standard form of the mixed Chern-Ricci equation with parameters ``(alpha, beta, gamma)``.

    ``rho = -(n alpha + 2 gamma)/beta`` and the right-hand side picks up
    ``exp(-sigma_deg log beta)``.  When ``n alpha + 2 gamma = 0`` the equation is
    a pure Laplacian one and is flagged inadmissible for the cone transform.
    """
    if cone.n != p.n:
        raise ValueError("cone dimension does not match n")
    s = p.n * p.alpha + 2 * p.gamma
    rho = -s / p.beta
    rho = 0.0 if rho == 0 else rho
    regime = classify_regime(rho, varrho(cone))
    return ReducedProblem(
        rho=rho,
        chi_shift=-np.asarray(ric) / p.beta + 0.0,
        exponent_shift=-sigma_deg * math.log(p.beta) + 0.0,
        lambda0=sigma_deg,
        regime=regime,
        pure_laplacian=(s == 0),
    )


def reduce_first_chern(ric, n: int, sigma_deg: float = 1.0) -> ReducedProblem:
    """``f(lam(-(e^u omega)^{-1} Ric^(1))) = psi`` as ``f(lam(chi + ddbar u)) = psi exp(s (u - log n))``.

    Here ``chi = -Ric^(1)(omega) / n``.
    """
    if not 0 < sigma_deg <= 1:
        raise ValueError("sigma_deg must lie in (0, 1]")
    return ReducedProblem(
        rho=None,
        chi_shift=-np.asarray(ric) / n + 0.0,
        exponent_shift=-sigma_deg * math.log(n) + 0.0,
        lambda0=sigma_deg,
        regime=Regime.UNIFORMLY_ELLIPTIC,
    )


def mixed_operator_matrix(rho: float, H) -> np.ndarray:
    """``(tr H) I - rho H`` for Hermitian fields ``H`` of shape ``(..., n, n)``."""
    H = np.asarray(H)
    n = H.shape[-1]
    tr = np.trace(H, axis1=-2, axis2=-1)
    return tr[..., None, None] * np.eye(n) - rho * H


# --------------------------------------------------------------------------
# conformal curvature on the flat torus
# --------------------------------------------------------------------------

def chern_ricci_flat_conformal(u, method: str = "fd", background=None) -> np.ndarray:
    """First Chern-Ricci form of ``e^u omega`` on the flat 2-torus.

    ``"fd"`` and ``"spectral"`` evaluate ``-n ddbar u`` with the respective
    Hessian.  ``"direct"`` evaluates ``R_{i jbar} = -d_i d_jbar log det(e^u I)``
    written through ``e^u`` itself:
    ``n e^{-u} (-(e^u)_{i jbar} + e^{-u} (e^u)_i (e^u)_jbar)``, spectrally.
    ``background`` is an optional Ricci form of the reference metric that is
    added unchanged.
    """
    _check_torus(u)
    n = N_TORUS
    if method == "fd":
        ric = -n * discrete_complex_hessian(u)
    elif method == "spectral":
        ric = -n * spectral_complex_hessian(u)
    elif method == "direct":
        w = np.exp(u)
        Hw = spectral_complex_hessian(w)
        g = complex_gradient(w, spectral=True)
        outer = g[..., :, None] * np.conj(g[..., None, :])
        emu = np.exp(-u)[..., None, None]
        ric = n * emu * (-Hw + emu * outer)
    else:
        raise ValueError(f"unknown method {method!r}")
    if background is not None:
        ric = ric + background
    return ric


def chern_scalar_flat_conformal(u, method: str = "fd", background=None) -> np.ndarray:
    """Chern scalar curvature ``e^{-u} tr Ric^(1)(e^u omega)`` on the flat torus."""
    ric = chern_ricci_flat_conformal(u, method, background)
    return np.exp(-np.asarray(u)) * np.real(np.trace(ric, axis1=-2, axis2=-1))


def conformal_target_matrix(u, ric) -> np.ndarray:
    """``-(e^u omega)^{-1} Ric`` on the flat torus."""
    return -np.exp(-np.asarray(u))[..., None, None] * ric
