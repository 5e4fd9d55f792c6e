"""Acceptance criteria, each run at its stated tolerance and time budget."""
import time
from pathlib import Path

import numpy as np
import pytest

from conekit.cli import curvature_round_trip
from conekit.cones import ConeType, Garding, _varrho_bisect, cone_type, kappa, sample_cone
from conekit.localization import (
    BorderedHermitian,
    exact_eigenvalues,
    growth_threshold,
    random_instances,
    two_by_two_eigenvalues,
    verify_against_eigensolver,
)
from conekit.operators import (
    HessianQuotient,
    Induced,
    SigmaKRoot,
    pue_ratio,
    sorted_gradient,
    structural_audit,
    theta_lower_bound,
    uniform_ellipticity_audit,
    value,
)
from conekit.problems import load_json, radial_from_json, torus_from_json
from conekit.radial import (
    all_iterates_admissible,
    completeness_integral,
    initial_guess,
    residual,
    solve_radial_dirichlet,
    solve_radial_exhaustion,
)
from conekit.torus import solve_torus

SPECS = Path(__file__).parents[1] / "docs" / "specs"
SAMPLES = 10_000


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def draw(cone, size, rng):
    pts = sample_cone(cone, size, rng)
    while len(pts) < size:
        pts = np.vstack([pts, sample_cone(cone, size, rng)])
    return pts[:size]


def test_criterion_1_cone_invariants(record):
    bad = []
    worst = 0.0
    with Timer() as tm:
        for n in range(1, 9):
            for k in range(1, n + 1):
                cone = Garding(k, n)
                if kappa(cone) != n - k:
                    bad.append(("kappa", k, n))
                err = abs(_varrho_bisect.__wrapped__(cone) - n / k)
                worst = max(worst, err)
                if err > 1e-12:
                    bad.append(("varrho", k, n))
                expected = ConeType.TYPE2 if k == 1 else ConeType.TYPE1
                if cone_type(cone) != expected:
                    bad.append(("type", k, n))
    ok = not bad and tm.elapsed < 1.0
    record(1, "cone invariants", ok,
           f"{len(bad)} mismatches, max |varrho - n/k| = {worst:.1e} (tol 1e-12), {tm.elapsed:.2f}s (budget 1s)")
    assert ok, bad


def test_criterion_2_localization(record):
    violations = {}
    with Timer() as tm:
        for n in range(2, 9):
            violations[n] = verify_against_eigensolver(n, 0.5, SAMPLES, seed=n).violations
        rng = np.random.Generator(np.random.Philox(2))
        d, a = random_instances(2, 1000, rng)
        closed_err = 0.0
        for i in range(len(d)):
            corner = growth_threshold(d[i], a[i], 0.5)
            lam = exact_eigenvalues(BorderedHermitian(d[i], a[i], corner))
            cf = two_by_two_eigenvalues(d[i][0], a[i][0], corner)
            closed_err = max(closed_err, float(np.max(np.abs(lam - cf))))
    total = sum(violations.values())
    ok = total == 0 and closed_err <= 1e-10 and tm.elapsed < 30
    record(2, "localization", ok,
           f"{total} violations over 7 x {SAMPLES} instances, n=2 closed form error {closed_err:.1e} "
           f"(tol 1e-10), {tm.elapsed:.1f}s (budget 30s)")
    assert ok, violations


def test_criterion_3_partial_uniform_ellipticity(record):
    rng = np.random.Generator(np.random.Philox(3))
    details = []
    ok = True
    with Timer() as tm:
        for n, k in [(3, 2), (4, 2), (4, 3), (5, 2)]:
            f = SigmaKRoot(k, n)
            lam = draw(f.cone, SAMPLES, rng)
            _, g = sorted_gradient(f, lam)
            ordered = bool(np.all(np.diff(g, axis=1) <= 1e-12 * g.sum(axis=1, keepdims=True)))
            theta = theta_lower_bound(f.cone)
            ratio = pue_ratio(f, lam)
            ok &= ordered and theta > 0 and bool(np.all(ratio >= theta))
            details.append(f"({n},{k}) min ratio {ratio.min():.4f} >= theta {theta:.4f}")
        iso = max(abs(float(pue_ratio(SigmaKRoot(n, n), np.ones(n))) - 1 / n) for n in range(2, 9))
        # exact up to the rounding of one sum and one division
        ok &= iso <= 4 * np.finfo(float).eps
    ok &= tm.elapsed < 60
    record(3, "partial uniform ellipticity", ok,
           "; ".join(details) + f"; |ratio(1) - 1/n| = {iso:.0e} (tol 4 ulp); {tm.elapsed:.1f}s (budget 60s)")
    assert ok


def test_criterion_4_induced_ellipticity(record):
    with Timer() as tm:
        uniform = uniform_ellipticity_audit(Induced(SigmaKRoot(2, 3), 1.0), nsamples=SAMPLES, seed=4)
        limiting = uniform_ellipticity_audit(Induced(SigmaKRoot(2, 3), 1.5), nsamples=SAMPLES, seed=5)
    mismatch = max(uniform.max_sum_mismatch, limiting.max_sum_mismatch)
    ok = (uniform.regime == "uniform" and uniform.theta_hat > 0
          and uniform.min_ratio >= uniform.theta_hat and uniform.monotone
          and limiting.regime == "limiting" and limiting.monotone
          and mismatch <= 1e-12 and tm.elapsed < 60)
    record(4, "induced-operator ellipticity", ok,
           f"rho=1: min ratio {uniform.min_ratio:.4f} >= floor {uniform.theta_hat:.4f}; "
           f"rho=3/2: all gradients positive = {limiting.monotone}; "
           f"sum mismatch {mismatch:.1e} (tol 1e-12); {tm.elapsed:.1f}s (budget 60s)")
    assert ok


BUILTIN = [SigmaKRoot(1, 3), SigmaKRoot(2, 3), SigmaKRoot(3, 3), SigmaKRoot(2, 4), SigmaKRoot(4, 5),
           HessianQuotient(2, 1, 3), HessianQuotient(3, 1, 4), Induced(SigmaKRoot(2, 3), 1.0)]


def test_criterion_5_structural_audit(record):
    failures = {}
    with Timer() as tm:
        for i, f in enumerate(BUILTIN):
            rep = structural_audit(f, nsamples=SAMPLES, seed=50 + i)
            if rep.total_violations:
                failures[repr(f)] = rep.violations
    ok = not failures and tm.elapsed < 60
    record(5, "structural audit", ok,
           f"{len(BUILTIN)} operators x {SAMPLES} samples, {len(failures)} with violations, "
           f"{tm.elapsed:.1f}s (budget 60s)")
    assert ok, failures


def test_criterion_6_radial_manufactured(record):
    details = []
    ok = True
    with Timer() as tm:
        for n in (2, 3):
            errs, worst_res, admissible = [], 0.0, True
            for N in (64, 128, 256):
                spec = {"operator": {"sigma_k_root": {"k": n, "n": n}}, "chi": 10.0,
                        "lambda0": 1.0, "manufactured": "sin(pi*t) + 2"}
                rs = radial_from_json(spec, points=N)
                phi, rep = solve_radial_dirichlet(rs.problem)
                errs.append(float(np.max(np.abs(phi - rs.exact(rs.problem.grid)))))
                worst_res = max(worst_res, float(np.max(np.abs(residual(rs.problem, phi)))))
                admissible &= all_iterates_admissible(rep)
            ratios = np.array(errs[:-1]) / np.array(errs[1:])
            ok &= bool(np.all((ratios >= 3.0) & (ratios <= 5.0))) and worst_res <= 1e-10 and admissible
            details.append(f"n={n} ratios {', '.join(f'{r:.3f}' for r in ratios)} residual {worst_res:.1e}")
    ok &= tm.elapsed < 30
    record(6, "radial manufactured solution", ok,
           "; ".join(details) + f"; ratio band [3, 5], residual tol 1e-10; {tm.elapsed:.2f}s (budget 30s)")
    assert ok


def test_criterion_7_exhaustion(record):
    rs = radial_from_json(load_json(SPECS / "radial_exhaustion.json"))
    with Timer() as tm:
        ex = solve_radial_exhaustion(rs.problem, [2, 4, 8, 16, 32, 64])
        fit = completeness_integral(ex.t, ex.solutions[-1])
    ok = (ex.monotone and ex.resolved_band_width <= 3.0 and 0.5 <= fit.slope <= 2.0
          and tm.elapsed < 120)
    record(7, "exhaustion and blow-up", ok,
           f"min increment {min(ex.monotone_min):.3f} (>= -1e-9); band on resolved collar "
           f"{ex.resolved_band_width:.3f} (<= 3.0; whole collar {ex.band_width:.3f}); "
           f"completeness slope {fit.slope:.3f} in [0.5, 2]; {tm.elapsed:.2f}s (budget 120s)")
    assert ok


@pytest.mark.slow
def test_criterion_8_torus_curvature_round_trip(record):
    spec = load_json(SPECS / "torus_first_chern.json")
    with Timer() as tm:
        res = {}
        for N in (16, 32):
            ts = torus_from_json(spec, N=N)
            u, _ = solve_torus(ts.problem)
            res[N] = curvature_round_trip(u, ts)
        # constant background and constant psi: the solution is constant
        const = dict(spec)
        const["ricci_background"] = {"11": -2.0, "22": -3.0, "12_re": -0.5}
        const["psi"] = 1.3
        ts = torus_from_json(const, N=8)
        u, _ = solve_torus(ts.problem)
        chi = ts.problem.chi_field()[0, 0, 0, 0]
        f = ts.problem.operator
        u_exact = np.log(float(value(f, np.linalg.eigvalsh(chi))) / float(ts.problem.psi_field()[0, 0, 0, 0]))
        const_err = float(np.max(np.abs(u - u_exact)))
    ratio = res[16] / res[32]
    ok = res[16] <= 5e-2 and ratio >= 3.0 and const_err <= 1e-9 and tm.elapsed < 300
    record(8, "torus curvature round trip", ok,
           f"relative residual N=16 {res[16]:.2e} (<= 5e-2), N=32 {res[32]:.2e}, ratio {ratio:.2f} (>= 3); "
           f"constant case error {const_err:.1e} (<= 1e-9); {tm.elapsed:.1f}s (budget 300s)")
    assert ok


def test_criterion_9_uniqueness(record):
    with Timer() as tm:
        rs = radial_from_json(load_json(SPECS / "radial_manufactured.json"))
        p = rs.problem
        t = p.grid
        a, _ = solve_radial_dirichlet(p)
        b, _ = solve_radial_dirichlet(p, initial=initial_guess(p) + 0.5 * np.sin(np.pi * (t - t[0]) / (1 - t[0])))
        radial_gap = float(np.max(np.abs(a - b)))

        ts = torus_from_json(load_json(SPECS / "torus_manufactured.json"))
        rng = np.random.Generator(np.random.Philox(9))
        u1, _ = solve_torus(ts.problem)
        u2, _ = solve_torus(ts.problem, initial=0.002 * rng.normal(size=ts.problem.shape) + 0.3)
        torus_gap = float(np.max(np.abs(u1 - u2)))
    ok = radial_gap <= 1e-8 and torus_gap <= 1e-8 and tm.elapsed < 120
    record(9, "uniqueness", ok,
           f"radial gap {radial_gap:.1e}, torus gap {torus_gap:.1e} (tol 1e-8); {tm.elapsed:.1f}s (budget 120s)")
    assert ok
