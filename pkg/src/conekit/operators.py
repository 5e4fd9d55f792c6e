"""Symmetric concave operators on cones and their ellipticity constants.

Built-in operators are all homogeneous of degree one:

* ``SigmaKRoot(k, n)``            f = sigma_k^(1/k)           on Garding(k, n)
* ``HessianQuotient(k, l, n)``    f = (sigma_k/sigma_l)^(1/(k-l))  on Garding(k, n)
* ``Induced(base, rho)``          f~(lam) = base(P(lam))      on LinearImage(base.cone, rho)

A ``degree`` below one turns any of them into ``f**degree``.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np
from scipy import optimize

from .cones import (
    Cone, ConeError, Garding, LinearImage, _as_array,
    esym, esym_deleted, is_orthant, kappa, project_P, sample_cone, varrho,
)

log = logging.getLogger(__name__)


class DomainError(ValueError):
    """The spectrum lies outside the operator's open cone."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InadmissibleParameterError(ConeError):
    pass


@dataclass(frozen=True)
class SigmaKRoot:
    k: int
    n: int
    degree: float = 1.0

    @property
    def cone(self) -> Cone:
        return Garding(self.k, self.n)

    def to_json(self) -> dict:
        body = {"k": self.k, "n": self.n}
        if self.degree != 1.0:
            body["degree"] = self.degree
        return {"sigma_k_root": body}


@dataclass(frozen=True)
class HessianQuotient:
    k: int
    l: int
    n: int
    degree: float = 1.0

    def __post_init__(self):
        if not (self.n >= self.k > self.l >= 0):
            raise ValueError(f"need n >= k > l >= 0, got k={self.k}, l={self.l}, n={self.n}")

    @property
    def cone(self) -> Cone:
        return Garding(self.k, self.n)

    def to_json(self) -> dict:
        body = {"k": self.k, "l": self.l, "n": self.n}
        if self.degree != 1.0:
            body["degree"] = self.degree
        return {"hessian_quotient": body}


@dataclass(frozen=True)
class Induced:
    base: "OperatorSpec"
    rho: float
    degree: float = 1.0
    _cone: Cone = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_cone", LinearImage(self.base.cone, float(self.rho)))

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def cone(self) -> Cone:
        return self._cone

    def to_json(self) -> dict:
        body = {"base": self.base.to_json(), "rho": self.rho}
        if self.degree != 1.0:
            body["degree"] = self.degree
        return {"induced": body}


OperatorSpec = Union[SigmaKRoot, HessianQuotient, Induced]


def _check_degree(f):
    if not (0.0 < f.degree <= 1.0):
        raise ValueError(f"homogeneity degree must lie in (0, 1], got {f.degree}")


def homogeneity_degree(f: OperatorSpec) -> float:
    return f.degree


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _raw_value(f, lam: np.ndarray) -> np.ndarray:
    if isinstance(f, SigmaKRoot):
        e = esym(lam, f.k)[..., f.k]
        return np.power(np.maximum(e, 0.0), 1.0 / f.k)
    if isinstance(f, HessianQuotient):
        e = esym(lam, f.k)
        return np.power(np.maximum(e[..., f.k], 0.0) / e[..., f.l], 1.0 / (f.k - f.l))
    if isinstance(f, Induced):
        return value(f.base, project_P(lam, f.rho), check=False)
    raise TypeError(f"unknown operator {f!r}")


def _raw_gradient(f, lam: np.ndarray, fval: np.ndarray) -> np.ndarray:
    if isinstance(f, SigmaKRoot):
        e = esym(lam, f.k)[..., f.k]
        dk = esym_deleted(lam, f.k - 1)
        return (fval / (f.k * e))[..., None] * dk
    if isinstance(f, HessianQuotient):
        e = esym(lam, f.k)
        dk = esym_deleted(lam, f.k - 1) / e[..., f.k, None]
        dl = esym_deleted(lam, f.l - 1) / e[..., f.l, None]
        return (fval / (f.k - f.l))[..., None] * (dk - dl)
    if isinstance(f, Induced):
        n = lam.shape[-1]
        g = gradient(f.base, project_P(lam, f.rho), check=False)
        return (g.sum(axis=-1, keepdims=True) - f.rho * g) / (n - f.rho)
    raise TypeError(f"unknown operator {f!r}")


def _domain_check(f, lam):
    inside = f.cone.contains(lam)
    if not np.all(inside):
        if np.ndim(inside) == 0:
            j = f.cone.violated_index(lam)
            raise DomainError(f"spectrum {np.round(lam, 6)} outside the cone (sigma_{j} fails)", j)
        bad = np.flatnonzero(~np.asarray(inside).ravel())
        first = lam.reshape(-1, lam.shape[-1])[bad[0]]
        j = f.cone.violated_index(first)
        raise DomainError(f"{bad.size} spectra outside the cone; first {np.round(first, 6)} "
                          f"(sigma_{j} fails)", j)


def value(f: OperatorSpec, lam, *, check: bool = True) -> np.ndarray:
    """``f(lam)`` along the last axis."""
    lam = _as_array(lam)
    _check_degree(f)
    if check:
        _domain_check(f, lam)
    v = _raw_value(f, lam)
    if f.degree != 1.0:
        v = v ** f.degree
    return v[()] if np.ndim(v) == 0 else v


def gradient(f: OperatorSpec, lam, *, check: bool = True) -> np.ndarray:
    """Analytic ``(df/dlam_1, ..., df/dlam_n)`` along the last axis."""
    lam = _as_array(lam)
    _check_degree(f)
    if check:
        _domain_check(f, lam)
    # the degree-one gradient first, then the power's chain rule
    raw = _raw_value(f, lam)
    g = _raw_gradient(f, lam, raw)
    if f.degree != 1.0:
        g = (f.degree * raw ** (f.degree - 1.0))[..., None] * g
    return g


def value_and_gradient(f: OperatorSpec, lam, *, check: bool = True):
    lam = _as_array(lam)
    if check:
        _domain_check(f, lam)
    raw = _raw_value(f, lam)
    g = _raw_gradient(f, lam, raw)
    if f.degree != 1.0:
        g = (f.degree * raw ** (f.degree - 1.0))[..., None] * g
        raw = raw ** f.degree
    return raw, g


def finite_difference_gradient(f: OperatorSpec, lam, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``rel_step * (1 + |lam_i|)``."""
    lam = _as_array(lam)
    n = lam.shape[-1]
    out = np.empty_like(lam)
    for i in range(n):
        h = rel_step * (1.0 + np.abs(lam[..., i]))
        up = lam.copy()
        dn = lam.copy()
        up[..., i] += h
        dn[..., i] -= h
        out[..., i] = (value(f, up, check=False) - value(f, dn, check=False)) / (2 * h)
    return out


# --------------------------------------------------------------------------
# structural audit
# --------------------------------------------------------------------------

@dataclass
class AuditReport:
    operator: dict
    nsamples: int
    violations: dict
    growth_exponent: float
    A_f: float
    worst: dict

    @property
    def total_violations(self) -> int:
        return int(sum(self.violations.values()))

    @property
    def unbounded(self) -> bool:
        return self.growth_exponent > 1e-3

    @property
    def passed(self) -> bool:
        return self.total_violations == 0

    def to_json(self) -> dict:
        return {
            "operator": self.operator,
            "nsamples": self.nsamples,
            "violations": self.violations,
            "total_violations": self.total_violations,
            "growth_exponent": self.growth_exponent,
            "unbounded": self.unbounded,
            "A_f": self.A_f,
            "worst": self.worst,
            "passed": self.passed,
        }


def trace_bound_constant(f: OperatorSpec) -> float:
    """``A_f = n / sum_i f_i(1, ..., 1)``."""
    n = f.cone.n
    return n / float(gradient(f, np.ones(n)).sum())


def growth_exponent(f: OperatorSpec, lam, doublings: int = 40) -> float:
    """Log-log slope of ``t -> f(lam + t e_n)`` over the last ten doublings."""
    lam = _as_array(lam)
    ts = 2.0 ** np.arange(doublings)
    pts = np.repeat(lam[None, :], ts.size, axis=0)
    pts[:, -1] += ts
    vals = value(f, pts, check=False)
    tail = slice(-10, None)
    slope = np.polyfit(np.log(ts[tail]), np.log(vals[tail]), 1)[0]
    return float(slope)


def structural_audit(f: OperatorSpec, nsamples: int = 10_000, seed: int = 0) -> AuditReport:
    """Randomized check of the structural conditions on ``(f, cone)``.

    Violations are counted, never raised.  Checked on ``nsamples`` interior
    points and as many random pairs: positivity, degree homogeneity at
    t in {0.5, 2, 10}, f_i > 0, midpoint concavity, the tangent-plane
    inequality, positivity of ``sum f_i(lam) mu_i``, the Euler identity and the
    trace lower bound ``sum lam >= n + A_f (f(lam) - f(1))``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    cone = f.cone
    n = cone.n
    lam = sample_cone(cone, nsamples, rng)
    mu = sample_cone(cone, nsamples, rng)
    m = min(len(lam), len(mu))
    lam, mu = lam[:m], mu[:m]
    fl, gl = value_and_gradient(f, lam)
    fm = value(f, mu)
    deg = f.degree
    scale = np.abs(fl) + np.abs(fm) + np.linalg.norm(gl, axis=1) * np.linalg.norm(mu - lam, axis=1)
    slack = 1e-10 * scale

    viol = {}
    worst = {}
    viol["positivity"] = int(np.sum(~(fl > 0)))
    hom_err = []
    for t in (0.5, 2.0, 10.0):
        ft = value(f, t * lam)
        hom_err.append(np.abs(ft - t ** deg * fl) / (t ** deg * np.abs(fl)))
    hom_err = np.max(hom_err, axis=0)
    viol["homogeneity"] = int(np.sum(hom_err > 1e-10))
    worst["homogeneity_rel_err"] = float(hom_err.max())
    viol["gradient_positive"] = int(np.sum(~np.all(gl > 0, axis=1)))

    mid = value(f, 0.5 * (lam + mu))
    mid_gap = mid - 0.5 * (fl + fm)
    viol["concavity_midpoint"] = int(np.sum(mid_gap < -slack))
    worst["concavity_midpoint"] = float(np.min(mid_gap / scale))

    tangent_gap = fl + np.sum(gl * (mu - lam), axis=1) - fm
    viol["concavity_tangent"] = int(np.sum(tangent_gap < -slack))
    worst["concavity_tangent"] = float(np.min(tangent_gap / scale))

    pairing = np.sum(gl * mu, axis=1)
    viol["pairing_positive"] = int(np.sum(~(pairing > 0)))

    euler = np.sum(gl * lam, axis=1)
    euler_err = np.abs(euler - deg * fl) / np.abs(fl)
    viol["euler"] = int(np.sum(euler_err > 1e-10))
    worst["euler_rel_err"] = float(euler_err.max())

    if deg == 1.0:
        A_f = trace_bound_constant(f)
        f1 = float(value(f, np.ones(n)))
        trace_gap = lam.sum(axis=1) - (n + A_f * (fl - f1))
        tscale = 1e-10 * (np.abs(lam).sum(axis=1) + n + A_f * (np.abs(fl) + abs(f1)))
        viol["trace_bound"] = int(np.sum(trace_gap < -tscale))
        worst["trace_bound"] = float(np.min(trace_gap))
    else:
        A_f = float("nan")

    growth = min(growth_exponent(f, p) for p in lam[:16])
    return AuditReport(f.to_json(), m, viol, growth, A_f, worst)


# --------------------------------------------------------------------------
# partial uniform ellipticity
# --------------------------------------------------------------------------

@dataclass
class ThetaBound:
    value: float
    alpha: np.ndarray | None
    kappa: int
    diagnostic: str = ""


def _theta_objective(alpha: np.ndarray, kap: int, n: int) -> float:
    denom = alpha[kap:].sum() - alpha[1:kap].sum()
    return (alpha[0] / n) / denom


def _alpha_vector(alpha: np.ndarray, kap: int) -> np.ndarray:
    v = alpha.copy()
    v[..., :kap] *= -1
    return v


def theta_search(cone: Cone, grid: int = 20, refine: bool = True) -> ThetaBound:
    """Certified lower bound for the partial-uniform-ellipticity constant.

    Any ``alpha > 0`` with ``(-alpha_1..-alpha_kappa, alpha_{kappa+1}..alpha_n)``
    in the cone gives the admissible value
    ``(alpha_1/n) / (sum_{i>kappa} alpha_i - sum_{2<=i<=kappa} alpha_i)``;
    the best value over a simplex grid, polished by Nelder-Mead, is returned.
    """
    n = cone.n
    if is_orthant(cone):
        return ThetaBound(1.0 / n, np.ones(n) / n, 0, "orthant: exact 1/n")
    kap = kappa(cone)
    # compositions of `grid` into n positive parts
    cuts = np.array(list(itertools.combinations(range(1, grid), n - 1)), dtype=float)
    if cuts.size == 0:
        return ThetaBound(0.0, None, kap, "grid too coarse")
    bounds = np.hstack([np.zeros((len(cuts), 1)), cuts, np.full((len(cuts), 1), grid)])
    alpha = np.diff(bounds, axis=1) / grid
    # (0^kappa, 1^(n-kappa)) is interior, so a small enough push of the zeros
    # to -eta stays admissible; these seeds matter when the grid is too coarse
    for eta in 0.5 ** np.arange(1, 40):
        seed = np.ones(n)
        seed[:kap] = eta
        if cone.contains(_alpha_vector(seed, kap)):
            alpha = np.vstack([alpha, seed / seed.sum()])
            break
    ok = cone.contains(_alpha_vector(alpha, kap))
    if not np.any(ok):
        log.warning("no admissible alpha on the grid for %r", cone)
        return ThetaBound(0.0, None, kap, "no admissible alpha found")
    alpha = alpha[ok]
    denom = alpha[:, kap:].sum(axis=1) - alpha[:, 1:kap].sum(axis=1)
    vals = (alpha[:, 0] / n) / denom
    best_i = int(np.argmax(vals))
    best_alpha, best = alpha[best_i], float(vals[best_i])

    if refine:
        def neg(x):
            a = np.exp(x)
            if not cone.contains(_alpha_vector(a, kap)):
                return 1.0
            return -_theta_objective(a, kap, n)

        starts = alpha[np.argsort(vals)[-3:]]
        for s in starts:
            res = optimize.minimize(neg, np.log(s), method="Nelder-Mead",
                                    options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
            a = np.exp(res.x)
            if cone.contains(_alpha_vector(a, kap)):
                v = _theta_objective(a, kap, n)
                if v > best:
                    best, best_alpha = float(v), a / a.sum()
    return ThetaBound(best, best_alpha, kap, "grid + Nelder-Mead")


def theta_lower_bound(cone: Cone, f: OperatorSpec | None = None) -> float:
    """Lower bound for the constant in ``f_i >= theta sum_j f_j``, i <= 1 + kappa."""
    return theta_search(cone).value


def sorted_gradient(f: OperatorSpec, lam) -> tuple[np.ndarray, np.ndarray]:
    """Spectra sorted ascending (stable) and the matching gradients."""
    lam = _as_array(lam)
    order = np.argsort(lam, axis=-1, kind="stable")
    lam_s = np.take_along_axis(lam, order, axis=-1)
    return lam_s, gradient(f, lam_s)


def pue_ratio(f: OperatorSpec, lam, kap: int | None = None) -> np.ndarray:
    """``f_(1+kappa)(lam) / sum_j f_j(lam)`` with gradient indices in ascending-lam order."""
    if kap is None:
        kap = kappa(f.cone)
    _, g = sorted_gradient(f, lam)
    r = g[..., kap] / g.sum(axis=-1)
    return r[()] if np.ndim(r) == 0 else r


@dataclass
class EllipticityReport:
    theta_hat: float
    min_ratio: float
    sum_positive: bool
    monotone: bool
    regime: str
    nsamples: int
    max_sum_mismatch: float

    @property
    def passed(self) -> bool:
        if not (self.sum_positive and self.monotone):
            return False
        if self.regime == "uniform":
            return self.theta_hat > 0 and self.min_ratio >= self.theta_hat
        return True

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def uniform_ellipticity_audit(f_tilde: Induced, nsamples: int = 10_000,
                              seed: int = 0) -> EllipticityReport:
    """Sampled ellipticity of an induced operator.

    Below the threshold ``rho < varrho(base cone)`` the transformed cone is of
    type 2 and its certified theta bound is the uniform floor every sampled
    ratio ``min_i f~_i / sum_j f~_j`` must clear.  At the threshold only
    ``f~_i > 0`` is asserted.
    """
    if not isinstance(f_tilde, Induced):
        raise TypeError("uniform_ellipticity_audit expects an Induced operator")
    base_cone = f_tilde.base.cone
    vr = varrho(base_cone)
    rho = f_tilde.rho
    n = base_cone.n
    if rho > vr + 1e-12 * n:
        raise InadmissibleParameterError(f"rho = {rho} exceeds varrho = {vr}")
    limiting = abs(rho - vr) <= 1e-12 * n
    rng = np.random.Generator(np.random.Philox(seed))
    lam = sample_cone(f_tilde.cone, nsamples, rng)
    g = gradient(f_tilde, lam)
    gsum = g.sum(axis=1)
    base_g = gradient(f_tilde.base, project_P(lam, rho))
    mismatch = float(np.max(np.abs(gsum - base_g.sum(axis=1)) / np.abs(base_g.sum(axis=1))))
    ratio = g.min(axis=1) / gsum
    theta_hat = 0.0 if limiting else theta_lower_bound(f_tilde.cone)
    return EllipticityReport(
        theta_hat=float(theta_hat),
        min_ratio=float(ratio.min()),
        sum_positive=bool(np.all(gsum > 0)),
        monotone=bool(np.all(g > 0)),
        regime="limiting" if limiting else "uniform",
        nsamples=int(len(lam)),
        max_sum_mismatch=mismatch,
    )


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def operator_from_json(obj: Any, path: str = "$") -> OperatorSpec:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError(f"{path}: expected an object with one operator key")
    (key, body), = obj.items()
    try:
        deg = float(body.get("degree", 1.0))
        if key == "sigma_k_root":
            return SigmaKRoot(int(body["k"]), int(body["n"]), deg)
        if key == "hessian_quotient":
            return HessianQuotient(int(body["k"]), int(body["l"]), int(body["n"]), deg)
        if key == "induced":
            base = operator_from_json(body["base"], path + ".induced.base")
            return Induced(base, float(body["rho"]), deg)
    except KeyError as exc:
        raise ValueError(f"{path}.{key}: missing field {exc.args[0]!r}") from None
    raise ValueError(f"{path}: unknown operator kind {key!r}")


def operator_to_json(f: OperatorSpec) -> dict:
    return f.to_json()


__all__ = [
    "SigmaKRoot", "HessianQuotient", "Induced", "OperatorSpec", "DomainError",
    "InadmissibleParameterError", "value", "gradient", "value_and_gradient",
    "finite_difference_gradient", "structural_audit", "AuditReport", "theta_search",
    "theta_lower_bound", "pue_ratio", "sorted_gradient", "uniform_ellipticity_audit",
    "EllipticityReport", "trace_bound_constant", "operator_from_json", "operator_to_json",
]
