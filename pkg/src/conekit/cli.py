"""``conekit`` command line.

Exit status: 0 on success, 2 when an audit or verification finds violations,
1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cones import ConeError, Garding, cone_from_json, describe, transform_cone
from .curvature import chern_ricci_flat_conformal, conformal_target_matrix
from .localization import (
    BorderedHermitian,
    exact_eigenvalues,
    localize,
    localize_refined,
    verify_against_eigensolver,
)
from .newton import InitializationError, NonConvergenceError
from .operators import (
    DomainError,
    Induced,
    SigmaKRoot,
    operator_from_json,
    structural_audit,
    theta_search,
    uniform_ellipticity_audit,
    value,
)
from .pencil import pencil_eigen
from .problems import (
    SpecError,
    load_json,
    radial_from_json,
    reduction_from_json,
    torus_from_json,
    write_radial_csv,
    write_torus_field,
)
from .radial import (
    Exhaustion,
    completeness_integral,
    residual as radial_residual,
    solve_radial_dirichlet,
    solve_radial_exhaustion,
)
from .torus import solve_torus

log = logging.getLogger("conekit")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VIOLATION = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for violations here
    def error(self, message):
        raise UsageError(message)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finite(obj):
    # JSON has no NaN or infinity
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_finite(json.loads(json.dumps(obj, default=_json_default))), indent=2, sort_keys=True)


def emit(obj, out: str | None) -> None:
    text = dumps(obj) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _sidecar(out: str | None, suffix: str, default: str) -> Path:
    if out:
        p = Path(out)
        return p.with_name(p.stem + suffix)
    return Path(default + suffix)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _cone_arg(args):
    if args.garding:
        k, n = args.garding
        return Garding(k, n)
    if args.spec:
        return cone_from_json(load_json(args.spec), "$")
    raise UsageError("give --garding K N or --spec PATH")


def _operator_arg(args):
    if args.spec:
        spec = load_json(args.spec)
        if isinstance(spec, dict) and "operator" in spec:
            return operator_from_json(spec["operator"], "$.operator")
        return operator_from_json(spec, "$")
    if getattr(args, "sigma", None):
        k, n = args.sigma
        return SigmaKRoot(k, n)
    raise UsageError("give --spec PATH")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_cone_info(args):
    emit(describe(_cone_arg(args)), args.out)
    return EXIT_OK


def cmd_cone_transform(args):
    cone = _cone_arg(args)
    rng = np.random.Generator(np.random.Philox(args.seed))
    new = transform_cone(cone, args.rho, rng=rng, nsamples=args.samples or 256)
    emit({"source": describe(cone), "rho": args.rho, "transformed": describe(new)}, args.out)
    return EXIT_OK


def cmd_op_audit(args):
    f = _operator_arg(args)
    rep = structural_audit(f, nsamples=args.samples or 10_000, seed=args.seed)
    out = rep.to_json()
    if isinstance(f, Induced):
        ell = uniform_ellipticity_audit(f, nsamples=args.samples or 10_000, seed=args.seed)
        out["ellipticity"] = ell.to_json()
        ok = rep.passed and ell.passed
    else:
        ok = rep.passed
    emit(out, args.out)
    if not ok:
        path = _sidecar(args.out, ".failures.csv", "audit")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "violations"])
            for k, v in rep.violations.items():
                if v:
                    w.writerow([k, v])
            if "ellipticity" in out and not out["ellipticity"]["passed"]:
                w.writerow(["ellipticity", 1])
        log.error("audit found violations; details in %s", path)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_op_theta(args):
    cone = _cone_arg(args)
    tb = theta_search(cone, grid=args.grid)
    emit({"cone": cone.to_json(), "kappa": tb.kappa, "theta_lower_bound": tb.value,
          "alpha": None if tb.alpha is None else tb.alpha.tolist(),
          "diagnostic": tb.diagnostic}, args.out)
    return EXIT_OK


def _complex_list(obj, path):
    if isinstance(obj, dict):
        re = np.asarray(obj.get("re", []), dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    arr = []
    for i, x in enumerate(obj):
        if isinstance(x, (list, tuple)) and len(x) == 2:
            arr.append(complex(x[0], x[1]))
        elif isinstance(x, (int, float)):
            arr.append(complex(x))
        else:
            raise SpecError(f"{path}[{i}]: expected a number or [re, im]")
    return np.asarray(arr)


def cmd_eig_localize(args):
    spec = load_json(args.spec)
    try:
        d = np.asarray(spec["d"], dtype=float)
        a = _complex_list(spec["a"], "$.a")
        eps = float(spec.get("eps", args.eps))
        corner = float(spec["corner"])
    except KeyError as exc:
        raise SpecError(f"$.{exc.args[0]}: missing field") from None
    m = BorderedHermitian(d, a, corner)
    refined = bool(spec.get("refined", args.refined))
    res = localize_refined(m, eps) if refined else localize(m, eps)
    lam = exact_eigenvalues(m)
    emit({"n": m.n, "eps": eps, "refined": refined, "satisfied": res.satisfied,
          "threshold": res.threshold, "alpha_intervals": res.alpha_intervals,
          "top_interval": res.top_interval, "permutation": res.permutation,
          "eigenvalues": lam.tolist()}, args.out)
    return EXIT_OK


def cmd_eig_verify(args):
    rep = verify_against_eigensolver(args.n, args.eps, args.trials or args.samples or 10_000,
                                     seed=args.seed, refined=args.refined)
    emit(rep.to_json(), args.out)
    if rep.violations:
        path = _sidecar(args.out, ".failures.csv", "verify")
        rows = [r for r in rep.rows if r.violation]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "threshold", "corner", "worst_margin"])
            for r in rows:
                w.writerow([r.n, repr(r.threshold), repr(r.corner), repr(r.worst_margin)])
        return EXIT_VIOLATION
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
    return EXIT_OK


def cmd_curvature_reduce(args):
    red = reduction_from_json(load_json(args.spec), "$")
    emit(red.to_json(), args.out)
    return EXIT_OK


def cmd_solve_radial(args):
    spec = load_json(args.spec)
    rs = radial_from_json(spec, "$", points=args.points, tol=args.tol)
    p = rs.problem
    out_csv = Path(args.out or "radial.csv")
    report_path = out_csv.with_name(out_csv.stem + ".report.json")
    t0 = time.perf_counter()
    if isinstance(p.boundary, Exhaustion):
        ex = solve_radial_exhaustion(p)
        fit = completeness_integral(ex.t, ex.solutions[-1])
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"phi_k{k}" for k in ex.ks])
            for i, t in enumerate(ex.t):
                w.writerow([repr(float(t))] + [repr(float(s[i])) for s in ex.solutions])
        from .plotting import plot_exhaustion
        plot_exhaustion(ex.t, ex.solutions, ex.ks, out_csv.with_suffix(".png"))
        report = ex.to_json()
        report["completeness_slope"] = fit.slope
    else:
        phi, rep = solve_radial_dirichlet(p)
        exact = rs.exact(p.grid) if rs.exact is not None else None
        write_radial_csv(out_csv, p.grid, phi, exact)
        report = rep.to_json()
        report["final_residual"] = float(np.max(np.abs(radial_residual(p, phi))))
        if exact is not None:
            report["max_error"] = float(np.max(np.abs(phi - exact)))
    report["elapsed_s"] = time.perf_counter() - t0
    report["points"] = p.points
    report_path.write_text(dumps(report) + "\n")
    sys.stdout.write(dumps({"solution": str(out_csv), "report": str(report_path)}) + "\n")
    return EXIT_OK


def cmd_solve_torus(args):
    spec = load_json(args.spec)
    ts = torus_from_json(spec, "$", N=args.points, tol=args.tol)
    u, rep = solve_torus(ts.problem)
    stem = Path(args.out or "torus.bin")
    bin_path, hdr_path = write_torus_field(stem, u)
    report = rep.to_json()
    report["N"] = ts.problem.N
    if ts.exact is not None:
        report["max_error"] = float(np.max(np.abs(u - ts.exact)))
    if ts.ricci_background is not None:
        report["curvature_residual"] = curvature_round_trip(u, ts)
    report_path = stem.with_name(stem.stem + ".report.json")
    report_path.write_text(dumps(report) + "\n")
    sys.stdout.write(dumps({"solution": str(bin_path), "header": str(hdr_path),
                            "report": str(report_path)}) + "\n")
    return EXIT_OK


def curvature_round_trip(u, ts) -> float:
    """Relative sup of ``f(lam(-(e^u omega)^{-1} Ric)) - psi`` with Ric recomputed from u."""
    ric = chern_ricci_flat_conformal(u, "direct", background=ts.ricci_background)
    lam, _ = pencil_eigen(np.eye(2), conformal_target_matrix(u, ric))
    f = ts.problem.operator
    return float(np.max(np.abs(value(f, lam) - ts.psi_target)) / np.max(ts.psi_target))


def cmd_report_convergence(args):
    spec = load_json(args.spec)
    from .plotting import plot_convergence
    if "radial" in spec:
        kind, body = "radial", spec["radial"]
    elif "torus" in spec:
        kind, body = "torus", spec["torus"]
    else:
        raise SpecError("$: expected a 'radial' or 'torus' problem")
    grids = spec.get("grids") or ([64, 128, 256] if kind == "radial" else [8, 16])
    rows = []
    for N in grids:
        if kind == "radial":
            rs = radial_from_json(body, f"$.{kind}", points=int(N), tol=args.tol)
            if rs.exact is None:
                raise SpecError(f"$.{kind}.manufactured: required for a convergence report")
            phi, rep = solve_radial_dirichlet(rs.problem)
            err = float(np.max(np.abs(phi - rs.exact(rs.problem.grid))))
            h = rs.problem.h
        else:
            ts = torus_from_json(body, f"$.{kind}", N=int(N), tol=args.tol)
            if ts.exact is None:
                raise SpecError(f"$.{kind}.manufactured: required for a convergence report")
            u, rep = solve_torus(ts.problem)
            err = float(np.max(np.abs(u - ts.exact)))
            h = ts.problem.h
        rows.append({"N": int(N), "h": h, "max_error": err, "residual": rep.residual,
                     "iterations": rep.iterations})
    for a, b in zip(rows, rows[1:]):
        b["ratio"] = a["max_error"] / b["max_error"]
        b["order"] = float(np.log(b["ratio"]) / np.log(a["h"] / b["h"]))
    stem = Path(args.out or "convergence.csv")
    csv_path = stem.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["N", "h", "max_error", "ratio", "order", "residual", "iterations"])
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in w.fieldnames})
    png = stem.with_suffix(".png")
    plot_convergence([r["h"] for r in rows], [r["max_error"] for r in rows], png,
                     title=f"{kind} manufactured solution")
    sys.stdout.write(dumps({"kind": kind, "rows": rows, "csv": str(csv_path), "figure": str(png)}) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--spec", help="input JSON specification")
    common.add_argument("--out", help="output path (stdout for JSON reports when omitted)")
    common.add_argument("--seed", type=int, default=0, help="64-bit seed for all sampling")
    common.add_argument("--samples", type=int, help="sample count for randomized checks")
    common.add_argument("--tol", type=float, help="solver residual tolerance override")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="conekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"conekit {__version__}")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def sub(group, name, fn, help_):
        p = group.add_parser(name, parents=[common], help=help_)
        p.set_defaults(fn=fn)
        return p

    cone = groups.add_parser("cone", help="cone invariants").add_subparsers(dest="cmd", required=True,
                                                                            parser_class=_Parser)
    p = sub(cone, "info", cmd_cone_info, "kappa, varrho and type of a cone")
    p.add_argument("--garding", type=int, nargs=2, metavar=("K", "N"))
    p = sub(cone, "transform", cmd_cone_transform, "image of a cone under the rho map")
    p.add_argument("--garding", type=int, nargs=2, metavar=("K", "N"))
    p.add_argument("--rho", type=float, required=True)

    op = groups.add_parser("op", help="operators").add_subparsers(dest="cmd", required=True,
                                                                 parser_class=_Parser)
    p = sub(op, "audit", cmd_op_audit, "structural audit of an operator")
    p.add_argument("--sigma", type=int, nargs=2, metavar=("K", "N"), help="sigma_k^(1/k) shortcut")
    p = sub(op, "theta", cmd_op_theta, "partial uniform ellipticity lower bound")
    p.add_argument("--garding", type=int, nargs=2, metavar=("K", "N"))
    p.add_argument("--grid", type=int, default=20)

    eig = groups.add_parser("eig", help="eigenvalue localization").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    p = sub(eig, "localize", cmd_eig_localize, "localize eigenvalues of one bordered matrix")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--refined", action="store_true")
    p = sub(eig, "verify", cmd_eig_verify, "random instances against the dense eigensolver")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--refined", action="store_true")
    p.add_argument("--csv", help="per-trial CSV")

    cur = groups.add_parser("curvature", help="curvature reductions").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    sub(cur, "reduce", cmd_curvature_reduce, "standard form and regime of a curvature equation")

    solve = groups.add_parser("solve", help="elliptic solvers").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    p = sub(solve, "radial", cmd_solve_radial, "radial annulus problem")
    p.add_argument("--points", type=int)
    p = sub(solve, "torus", cmd_solve_torus, "flat 2-torus problem")
    p.add_argument("--points", type=int, help="grid size N")

    rep = groups.add_parser("report", help="reports with figures").add_subparsers(
        dest="cmd", required=True, parser_class=_Parser)
    sub(rep, "convergence", cmd_report_convergence, "manufactured-solution convergence table and plot")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"conekit: {exc}\n")
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.samples is not None and args.samples <= 0:
        sys.stderr.write("conekit: --samples must be positive\n")
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except (UsageError, SpecError, ConeError, DomainError, ValueError, TypeError, OSError) as exc:
        sys.stderr.write(f"conekit: {exc}\n")
        return EXIT_CONFIG
    except (InitializationError, NonConvergenceError) as exc:
        sys.stderr.write(f"conekit: solver failed: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
