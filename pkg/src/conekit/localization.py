"""Eigenvalue localization for bordered Hermitian matrices.

The matrix has a real diagonal block ``diag(d_1..d_{n-1})``, a complex last
column ``a`` and a real corner entry.  Once the corner is large compared with
``|a|^2 / eps`` and ``|d|``, the n-1 smallest eigenvalues stay within ``eps``
of the diagonal entries and the largest one sits in ``[corner, corner + (n-1) eps)``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .parallel import parallel_map

EXTENDED_PRECISION_MARGIN = 1e-9


@dataclass(frozen=True)
class BorderedHermitian:
    d: np.ndarray
    a: np.ndarray
    corner: float

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).ravel()
        a = np.asarray(self.a, dtype=complex).ravel()
        if d.size != a.size:
            raise ValueError("d and a must have the same length n-1")
        if d.size < 1:
            raise ValueError("need n >= 2")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "corner", float(self.corner))

    @property
    def n(self) -> int:
        return self.d.size + 1

    def matrix(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n), dtype=complex)
        A[np.arange(n - 1), np.arange(n - 1)] = self.d
        A[:-1, -1] = self.a
        A[-1, :-1] = np.conj(self.a)
        A[-1, -1] = self.corner
        return A


@dataclass
class LocalizationResult:
    alpha_intervals: list = field(default_factory=list)  # (center, radius) per small eigenvalue
    top_interval: tuple | None = None                      # [lo, hi)
    permutation: list = field(default_factory=list)       # d-index matched to sorted lambda_alpha
    satisfied: bool = False
    threshold: float = float("nan")


def growth_threshold(d, a, eps: float) -> float:
    """Corner size above which the eps-localization holds.

    ``(2n-3)/eps |a|^2 + (n-1) sum|d| + (n-2) eps/(2n-3)`` in general and the
    sharper ``|a_1|^2/eps + d_1`` for 2x2 matrices.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = np.asarray(d, dtype=float).ravel()
    a = np.asarray(a, dtype=complex).ravel()
    n = d.size + 1
    a2 = float(np.sum(np.abs(a) ** 2))
    if n == 2:
        return a2 / eps + float(d[0])
    return (2 * n - 3) / eps * a2 + (n - 1) * float(np.sum(np.abs(d))) + (n - 2) * eps / (2 * n - 3)


def refined_threshold(d, a, eps: float) -> float:
    """The weaker growth condition ``|a|^2/eps + sum(d_i + (n-2)|d_i|) + (n-2) eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = np.asarray(d, dtype=float).ravel()
    a = np.asarray(a, dtype=complex).ravel()
    n = d.size + 1
    return float(np.sum(np.abs(a) ** 2) / eps + np.sum(d + (n - 2) * np.abs(d)) + (n - 2) * eps)


def _sorted_d_order(d: np.ndarray) -> np.ndarray:
    return np.argsort(d, kind="stable")


def localize(m: BorderedHermitian, eps: float) -> LocalizationResult:
    thr = growth_threshold(m.d, m.a, eps)
    if m.corner < thr:
        return LocalizationResult(satisfied=False, threshold=thr)
    order = _sorted_d_order(m.d)
    return LocalizationResult(
        alpha_intervals=[(float(m.d[i]), eps) for i in order],
        top_interval=(m.corner, m.corner + (m.n - 1) * eps),
        permutation=[int(i) for i in order],
        satisfied=True,
        threshold=thr,
    )


def exact_eigenvalues(m: BorderedHermitian, extended: bool = False) -> np.ndarray:
    if not extended:
        return np.linalg.eigvalsh(m.matrix())
    with mpmath.workdps(40):
        A = mpmath.matrix(m.matrix().tolist())
        ev = mpmath.eighe(A, eigvals_only=True)
        return np.sort(np.array([float(mpmath.re(x)) for x in ev]))


def localize_refined(m: BorderedHermitian, eps: float) -> LocalizationResult:
    """Nearest-diagonal matching under the weaker growth condition.

    Each small eigenvalue is claimed within ``eps`` of its nearest ``d_i`` and
    the top one in ``[corner, corner + (n-1) eps + |sum(d_alpha - d_{i_alpha})|)``.
    """
    thr = refined_threshold(m.d, m.a, eps)
    if m.corner < thr:
        return LocalizationResult(satisfied=False, threshold=thr)
    lam = exact_eigenvalues(m)
    small = lam[:-1]
    match = np.argmin(np.abs(small[:, None] - m.d[None, :]), axis=1)
    drift = abs(float(np.sum(np.sort(m.d) - m.d[match])))
    return LocalizationResult(
        alpha_intervals=[(float(m.d[i]), eps) for i in match],
        top_interval=(m.corner, m.corner + (m.n - 1) * eps + drift),
        permutation=[int(i) for i in match],
        satisfied=True,
        threshold=thr,
    )


def claim_margins(res: LocalizationResult, lam: np.ndarray) -> np.ndarray:
    """Signed slack of every claim; a claim holds iff its margin is positive.

    The lower end of the top interval is closed, so its margin is shifted by
    the smallest positive float to keep ``lambda_n == corner`` a pass.
    """
    lam = np.sort(lam)
    out = [r - abs(x - c) for (c, r), x in zip(res.alpha_intervals, lam[:-1])]
    lo, hi = res.top_interval
    out.append(hi - lam[-1])
    out.append((lam[-1] - lo) + np.finfo(float).tiny)
    return np.asarray(out)


def check(m: BorderedHermitian, eps: float, refined: bool = False) -> tuple[bool, float, bool]:
    """(violation, worst margin, claimed) for one instance against the eigensolver."""
    res = localize_refined(m, eps) if refined else localize(m, eps)
    if not res.satisfied:
        return False, float("nan"), False
    lam = exact_eigenvalues(m)
    margins = claim_margins(res, lam)
    worst = float(margins.min())
    if abs(worst) < EXTENDED_PRECISION_MARGIN * (1.0 + abs(m.corner)):
        lam = exact_eigenvalues(m, extended=True)
        margins = claim_margins(res, lam)
        worst = float(margins.min())
    return bool(worst <= 0), worst, True


@dataclass
class TrialRow:
    n: int
    threshold: float
    corner: float
    worst_margin: float
    violation: bool
    claimed: bool


@dataclass
class VerifyReport:
    n: int
    eps: float
    trials: int
    violations: int
    worst_margin: float
    rows: list

    def to_json(self) -> dict:
        return {
            "n": self.n, "eps": self.eps, "trials": self.trials,
            "violations": self.violations, "worst_margin": self.worst_margin,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["trial", "n", "threshold", "corner", "worst_margin", "violation"])
        for i, r in enumerate(self.rows):
            w.writerow([i, r.n, repr(r.threshold), repr(r.corner), repr(r.worst_margin),
                        int(r.violation)])
        return buf.getvalue()


def random_instances(n: int, trials: int, rng: np.random.Generator):
    """``d`` uniform in [-2, 2], ``a`` uniform in the complex disc of radius 2."""
    d = rng.uniform(-2.0, 2.0, size=(trials, n - 1))
    r = 2.0 * np.sqrt(rng.uniform(size=(trials, n - 1)))
    phase = rng.uniform(0, 2 * np.pi, size=(trials, n - 1))
    a = r * np.exp(1j * phase)
    return d, a


def _verify_chunk(args):
    n, eps, d, a, corner, refined = args
    rows = []
    # batched dense eigensolve, then per-row fallback only near zero margin
    T = d.shape[0]
    A = np.zeros((T, n, n), dtype=complex)
    idx = np.arange(n - 1)
    A[:, idx, idx] = d
    A[:, :-1, -1] = a
    A[:, -1, :-1] = np.conj(a)
    A[:, -1, -1] = corner
    lam_all = np.linalg.eigvalsh(A)
    for t in range(T):
        m = BorderedHermitian(d[t], a[t], corner[t])
        res = localize_refined(m, eps) if refined else localize(m, eps)
        if not res.satisfied:
            rows.append(TrialRow(n, res.threshold, m.corner, float("nan"), False, False))
            continue
        margins = claim_margins(res, lam_all[t])
        worst = float(margins.min())
        if abs(worst) < EXTENDED_PRECISION_MARGIN * (1.0 + abs(m.corner)):
            margins = claim_margins(res, exact_eigenvalues(m, extended=True))
            worst = float(margins.min())
        rows.append(TrialRow(n, res.threshold, m.corner, worst, bool(worst <= 0), True))
    return rows


def verify_against_eigensolver(n: int, eps: float, trials: int, seed: int = 0,
                               margin: float = 0.0, refined: bool = False,
                               offset: float = 0.0) -> VerifyReport:
    """Random instances with ``corner = threshold + offset + margin * U``; count failed claims.

    ``offset < 0`` places the corner below the threshold, where no claim is
    made and nothing is checked.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    d, a = random_instances(n, trials, rng)
    u = np.abs(rng.uniform(size=trials))
    thr_fn = refined_threshold if refined else growth_threshold
    thr = np.array([thr_fn(d[i], a[i], eps) for i in range(trials)])
    corner = thr + offset + margin * u
    chunks = np.array_split(np.arange(trials), max(1, trials // 2000))
    jobs = [(n, eps, d[c], a[c], corner[c], refined) for c in chunks if c.size]
    rows = [r for part in parallel_map(_verify_chunk, jobs) for r in part]
    claimed = [r for r in rows if r.claimed]
    worst = min((r.worst_margin for r in claimed), default=float("nan"))
    return VerifyReport(n, eps, trials, sum(r.violation for r in rows), worst, rows)


def two_by_two_eigenvalues(d1: float, a1: complex, corner: float) -> tuple[float, float]:
    """Closed-form eigenvalues of ``[[d1, a1], [conj(a1), corner]]``."""
    disc = np.sqrt((corner - d1) ** 2 + 4 * abs(a1) ** 2)
    return (corner + d1 - disc) / 2, (corner + d1 + disc) / 2
