"""Symmetric cones in R^n: membership, invariants and linear transforms.

Two families are representable:

* ``Garding(k, n)`` -- the connected component of ``{sigma_k > 0}`` that
  contains the positive orthant.
* ``LinearImage(base, rho)`` -- the image of ``base`` under the linear map
  ``mu -> (sum(mu) - (n - rho) mu) / rho``.  Membership of ``lam`` is decided
  by pulling back through :func:`project_P`.

Every representable cone sits between the positive orthant and the half-space
``{sum(lam) > 0}``.
"""
from __future__ import annotations

import enum
import functools
import json
from dataclasses import dataclass, replace
from typing import Any, Union

import numpy as np

DEFAULT_TOL = 1e-10
GAMMA_INFTY_CAP = 2.0**60
VARRHO_ITERS = 200


class ConeError(ValueError):
    """Invalid cone parameters or an inadmissible transform."""


class SingularMapError(ConeError):
    """The projection ``P`` is not invertible (``rho == n``)."""


class ConeType(str, enum.Enum):
    TYPE1 = "Type1"
    TYPE2 = "Type2"


# --------------------------------------------------------------------------
# elementary symmetric functions
# --------------------------------------------------------------------------

def esym(lam, kmax: int | None = None) -> np.ndarray:
    """All elementary symmetric polynomials ``e_0..e_kmax`` of the last axis.

    Uses the one-variable-at-a-time recurrence
    ``e_j(l_1..l_m) = e_j(l_1..l_{m-1}) + l_m e_{j-1}(l_1..l_{m-1})``
    accumulated in extended precision.

    Returns an array of shape ``lam.shape[:-1] + (kmax + 1,)``.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if kmax is None:
        kmax = n
    acc = np.zeros(lam.shape[:-1] + (kmax + 1,), dtype=np.longdouble)
    acc[..., 0] = 1
    x = lam.astype(np.longdouble)
    for m in range(n):
        top = min(m + 1, kmax)
        # RHS is evaluated before assignment, so e_{j-1} is still the old value
        acc[..., 1:top + 1] = acc[..., 1:top + 1] + x[..., m, None] * acc[..., 0:top]
    return acc.astype(float)


def esym_k(lam, k: int) -> np.ndarray:
    """``sigma_k`` along the last axis (``sigma_0 = 1``, ``sigma_k = 0`` for k < 0)."""
    lam = np.asarray(lam, dtype=float)
    if k < 0:
        return np.zeros(lam.shape[:-1])
    if k > lam.shape[-1]:
        return np.zeros(lam.shape[:-1])
    return esym(lam, k)[..., k]


def esym_deleted(lam, k: int) -> np.ndarray:
    """``sigma_k(lam | i)`` for every i: the k-th function with entry i removed.

    Shape ``lam.shape``.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if k < 0:
        return np.zeros_like(lam)
    if k == 0:
        return np.ones_like(lam)
    idx = np.array([[j for j in range(n) if j != i] for i in range(n)], dtype=int)
    sub = lam[..., idx]  # (..., n, n-1)
    if k > n - 1:
        return np.zeros_like(lam)
    return esym(sub, k)[..., k]


# --------------------------------------------------------------------------
# spectra
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    """An eigenvalue n-tuple stored in ascending order."""

    values: tuple

    @classmethod
    def of(cls, values) -> "Spectrum":
        arr = np.asarray(values, dtype=float).ravel()
        # stable: ties keep original order
        order = np.argsort(arr, kind="stable")
        return cls(tuple(float(v) for v in arr[order]))

    @property
    def n(self) -> int:
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype or float)


def _as_array(lam) -> np.ndarray:
    if isinstance(lam, Spectrum):
        return np.asarray(lam.values, dtype=float)
    return np.asarray(lam, dtype=float)


# --------------------------------------------------------------------------
# the projection P and its inverse
# --------------------------------------------------------------------------

def project_P(lam, rho: float) -> np.ndarray:
    """``P(lam) = (sum(lam) * 1 - rho * lam) / (n - rho)``, along the last axis."""
    lam = _as_array(lam)
    n = lam.shape[-1]
    if rho == n:
        raise SingularMapError(f"projection P is singular for rho = n = {n}")
    total = lam.sum(axis=-1, keepdims=True)
    return (total - rho * lam) / (n - rho)


def map_forward(mu, rho: float) -> np.ndarray:
    """Inverse of :func:`project_P`: ``lam_i = (sum(mu) - (n - rho) mu_i) / rho``."""
    mu = _as_array(mu)
    n = mu.shape[-1]
    if rho == 0:
        raise SingularMapError("forward map is singular for rho = 0")
    total = mu.sum(axis=-1, keepdims=True)
    return (total - (n - rho) * mu) / rho


# --------------------------------------------------------------------------
# cones
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Garding:
    k: int
    n: int
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not (1 <= self.k <= self.n):
            raise ConeError(f"Garding cone needs 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.tol < 0:
            raise ConeError("tol must be nonnegative")

    def margins(self, lam) -> np.ndarray:
        """Slack ``sigma_j - tol * |lam|^j`` for j = 1..k, shape ``(..., k)``."""
        lam = _as_array(lam)
        e = esym(lam, self.k)[..., 1:]
        norm = np.linalg.norm(lam, axis=-1, keepdims=True)
        powers = norm ** np.arange(1, self.k + 1)
        return e - self.tol * powers

    def contains(self, lam):
        lam = _check_dim(lam, self.n)
        out = np.all(self.margins(lam) > 0, axis=-1)
        return bool(out) if out.ndim == 0 else out

    def violated_index(self, lam) -> int | None:
        """Smallest degree j whose strict inequality fails, or None."""
        m = self.margins(_check_dim(lam, self.n))
        bad = np.nonzero(np.atleast_1d(m) <= 0)[0]
        return int(bad[0]) + 1 if bad.size else None

    def with_tol(self, tol: float) -> "Garding":
        return replace(self, tol=tol)

    def to_json(self) -> dict:
        return {"garding": {"k": self.k, "n": self.n}}


@dataclass(frozen=True)
class LinearImage:
    base: "Cone"
    rho: float

    def __post_init__(self):
        if self.rho == 0:
            raise ConeError("LinearImage requires rho != 0")
        if self.rho == self.base.n:
            raise SingularMapError("LinearImage requires rho != n")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def tol(self) -> float:
        return self.base.tol

    def contains(self, lam):
        lam = _check_dim(lam, self.n)
        return self.base.contains(project_P(lam, self.rho))

    def violated_index(self, lam) -> int | None:
        return self.base.violated_index(project_P(_check_dim(lam, self.n), self.rho))

    def margins(self, lam) -> np.ndarray:
        return self.base.margins(project_P(_as_array(lam), self.rho))

    def with_tol(self, tol: float) -> "LinearImage":
        return replace(self, base=self.base.with_tol(tol))

    def to_json(self) -> dict:
        return {"linear_image": {"base": self.base.to_json(), "rho": self.rho}}


Cone = Union[Garding, LinearImage]


def _check_dim(lam, n: int) -> np.ndarray:
    arr = _as_array(lam)
    if arr.shape[-1] != n:
        raise ValueError(f"spectrum has dimension {arr.shape[-1]}, cone has n = {n}")
    return arr


def contains(cone: Cone, lam):
    """Open-cone membership with the cone's relative tolerance."""
    return cone.contains(lam)


def relative_margin(cone: Cone, lam) -> np.ndarray:
    """Scale-free admissibility slack ``min_j (sigma_j / |.|^j) - tol``; positive inside."""
    lam = _as_array(lam)
    if isinstance(cone, LinearImage):
        return relative_margin(cone.base, project_P(lam, cone.rho))
    e = esym(lam, cone.k)[..., 1:]
    norm = np.linalg.norm(lam, axis=-1, keepdims=True)
    norm = np.where(norm > 0, norm, 1.0)
    return np.min(e / norm ** np.arange(1, cone.k + 1), axis=-1) - cone.tol


def is_orthant(cone: Cone) -> bool:
    return isinstance(cone, Garding) and cone.k == cone.n


def is_halfspace(cone: Cone) -> bool:
    return isinstance(cone, Garding) and cone.k == 1


# --------------------------------------------------------------------------
# invariants
# --------------------------------------------------------------------------

def _kappa_probe(cone: Cone) -> int:
    # (0,..,0,1,..,1) in an open cone survives a small negative push of the
    # zeros; a boundary point does not.
    n = cone.n
    eta = 10 * max(cone.tol, DEFAULT_TOL)
    best = 0
    for m in range(n):
        v = np.ones(n)
        v[:m] = -eta
        if cone.contains(v):
            best = m
    return best


def kappa(cone: Cone) -> int:
    """Largest m such that ``(0^m, 1^(n-m))`` lies in the open cone."""
    k = _kappa_probe(cone)
    if isinstance(cone, Garding):
        closed = cone.n - cone.k
        if k != closed:
            raise AssertionError(f"kappa probe {k} disagrees with closed form {closed}")
    return k


@functools.lru_cache(maxsize=256)
def _varrho_bisect(cone: Cone) -> float:
    exact = cone.with_tol(0.0)
    n = cone.n
    lo, hi = 1.0, float(n)

    def inside(t):
        v = np.ones(n)
        v[-1] = 1.0 - t
        return exact.contains(v)

    if inside(hi):
        return hi
    for _ in range(VARRHO_ITERS):
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * n:
            break
    return 0.5 * (lo + hi)


def varrho(cone: Cone) -> float:
    """The unique rho with ``(1, ..., 1, 1 - rho)`` on the cone boundary."""
    t = _varrho_bisect(cone)
    if isinstance(cone, Garding):
        closed = cone.n / cone.k
        if abs(t - closed) > 1e-12 * cone.n:
            raise AssertionError(f"varrho bisection {t!r} disagrees with n/k = {closed!r}")
        return closed
    return t


def cone_type(cone: Cone) -> ConeType:
    return ConeType.TYPE2 if kappa(cone) == cone.n - 1 else ConeType.TYPE1


@dataclass(frozen=True)
class GammaInftyProbe:
    member: bool
    last_entry: float | None
    capped: bool


def probe_gamma_infty(cone: Cone, lam_prime) -> GammaInftyProbe:
    """Search ``R = 1, 2, 4, ...`` up to 2**60 for ``(lam', R)`` in the cone."""
    lp = np.asarray(lam_prime, dtype=float).ravel()
    if lp.size != cone.n - 1:
        raise ValueError(f"lam' must have length n-1 = {cone.n - 1}")
    R = 1.0
    while R <= GAMMA_INFTY_CAP:
        if cone.contains(np.append(lp, R)):
            return GammaInftyProbe(True, R, False)
        R *= 2.0
    return GammaInftyProbe(False, None, True)


def gamma_infty_contains(cone: Cone, lam_prime) -> bool:
    return probe_gamma_infty(cone, lam_prime).member


def gamma_infty_closed_form(cone: Garding, lam_prime) -> bool:
    """Gamma_infty of Garding(k, n) is Garding(k-1, n-1), or everything for k = 1."""
    if cone.k == 1:
        return True
    lp = np.asarray(lam_prime, dtype=float)
    e = esym(lp, cone.k - 1)[1:]
    return bool(np.all(e > 0))


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------

def transform_cone(cone: Cone, rho: float, *, rng: np.random.Generator | None = None,
                   nsamples: int = 256) -> LinearImage:
    """The cone ``{map_forward(mu, rho) : mu in cone}``.

    Requires ``rho != 0`` and ``rho <= varrho(cone)`` (strictly below n for the
    half-space).  The result is checked to contain sampled orthant points.
    """
    if rho == 0:
        raise ConeError("rho = 0 is inadmissible")
    vr = varrho(cone)
    if rho > vr + 1e-12 * cone.n:
        raise ConeError(f"rho = {rho} exceeds varrho = {vr}")
    if is_halfspace(cone) and rho >= cone.n:
        raise ConeError("rho must be < n when the base cone is the half-space")
    out = LinearImage(cone, float(rho))
    if rng is None:
        rng = np.random.default_rng(0)
    pts = np.exp(rng.normal(scale=1.0, size=(nsamples, cone.n)))
    ok = out.contains(pts)
    if not np.all(ok):
        raise AssertionError("transformed cone does not contain the positive orthant samples")
    return out


def boundary_admissible(kappa_prime, cone: Cone, rho: float) -> bool:
    """Whether ``sum(k) 1 - rho (k, 0) + t (1, .., 1, 1 - rho)`` enters the cone for large t."""
    kp = np.asarray(kappa_prime, dtype=float).ravel()
    n = cone.n
    if kp.size != n - 1:
        raise ValueError(f"kappa' must have length n-1 = {n - 1}")
    if rho < varrho(cone):
        return True
    base = kp.sum() * np.ones(n) - rho * np.append(kp, 0.0)
    direction = np.ones(n)
    direction[-1] = 1.0 - rho
    t = 1.0
    while t <= GAMMA_INFTY_CAP:
        if cone.contains(base + t * direction):
            return True
        t *= 2.0
    return False


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def _entry_shift(cone: Cone, z: np.ndarray) -> np.ndarray:
    """Smallest s with ``z + s 1`` in the closed cone, per row (bisection)."""
    exact = cone.with_tol(0.0)
    scale = np.abs(z).max(axis=-1) + 1.0
    lo = -scale * cone.n - 1.0
    hi = scale * cone.n + 1.0
    ones = np.ones(cone.n)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = exact.contains(z + mid[:, None] * ones)
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return hi


def sample_cone(cone: Cone, size: int, rng: np.random.Generator,
                depth=(1e-3, 10.0)) -> np.ndarray:
    """Random interior points, from near the boundary to deep inside.

    A Gaussian direction is shifted along ``(1, ..., 1)`` to the boundary and
    then pushed inward by a log-uniform fraction of its norm drawn from ``depth``.
    """
    z = rng.normal(size=(size, cone.n))
    s0 = _entry_shift(cone, z)
    lo, hi = np.log(depth[0]), np.log(depth[1])
    push = np.exp(rng.uniform(lo, hi, size=size)) * (np.linalg.norm(z, axis=1) + 1.0)
    pts = z + (s0 + push)[:, None]
    inside = cone.contains(pts)
    return pts[inside]


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def cone_from_json(obj: Any, path: str = "$") -> Cone:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ConeError(f"{path}: expected an object with a single key 'garding' or 'linear_image'")
    (key, body), = obj.items()
    if key == "garding":
        try:
            return Garding(int(body["k"]), int(body["n"]), float(body.get("tol", DEFAULT_TOL)))
        except KeyError as exc:
            raise ConeError(f"{path}.garding: missing field {exc.args[0]!r}") from None
    if key == "linear_image":
        try:
            base = cone_from_json(body["base"], path + ".linear_image.base")
            return LinearImage(base, float(body["rho"]))
        except KeyError as exc:
            raise ConeError(f"{path}.linear_image: missing field {exc.args[0]!r}") from None
    raise ConeError(f"{path}: unknown cone kind {key!r}")


def cone_to_json(cone: Cone) -> dict:
    return cone.to_json()


def describe(cone: Cone) -> dict:
    """Invariants as a JSON-ready dict."""
    vr = varrho(cone)
    return {
        "cone": cone.to_json(),
        "n": cone.n,
        "kappa": kappa(cone),
        "varrho": vr,
        "type": cone_type(cone).value,
    }
