"""JSON problem specifications and solution file formats.

Scalar fields are given either as numbers or as expression strings parsed by
sympy: radial fields in the variable ``t``, torus fields in ``x1, y1, x2, y2``
(``pi`` and the usual elementary functions are available).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import sympy

from .cones import cone_from_json
from .curvature import MixedRicciParams, reduce_first_chern, reduce_mixed
from .operators import operator_from_json, value
from .pencil import spectral_complex_hessian, torus_coordinates, pencil_eigen
from .radial import DEFAULT_T0, Dirichlet, Exhaustion, RadialProblem, radial_eigenvalues
from .torus import TorusProblem

T = sympy.Symbol("t")
TORUS_SYMBOLS = sympy.symbols("x1 y1 x2 y2")


class SpecError(ValueError):
    """A malformed specification; the message names the offending path."""


def load_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise SpecError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _require(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise SpecError(f"{path}: expected an object")
    if key not in obj:
        raise SpecError(f"{path}.{key}: missing field")
    return obj[key]


def _number(x, path: str) -> float:
    try:
        return float(x)
    except (TypeError, ValueError):
        raise SpecError(f"{path}: expected a number, got {x!r}") from None


def parse_expression(src, symbols, path: str):
    """sympy expression from a number or string; unknown symbols are rejected."""
    if isinstance(src, (int, float)):
        return sympy.Float(src)
    if not isinstance(src, str):
        raise SpecError(f"{path}: expected a number or expression string")
    try:
        expr = sympy.sympify(src, locals={s.name: s for s in symbols})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise SpecError(f"{path}: cannot parse expression {src!r} ({exc})") from None
    extra = expr.free_symbols - set(symbols)
    if extra:
        names = ", ".join(sorted(s.name for s in extra))
        raise SpecError(f"{path}: unknown symbols {names}")
    return expr


def _lambdify(expr, symbols):
    fn = sympy.lambdify(symbols, expr, modules="numpy")
    return lambda *args: np.broadcast_to(np.asarray(fn(*args), dtype=float),
                                         np.broadcast_shapes(*(np.shape(a) for a in args)))


def _operator(spec: dict, path: str):
    try:
        return operator_from_json(_require(spec, "operator", path), path + ".operator")
    except SpecError:
        raise
    except (ValueError, TypeError) as exc:
        raise SpecError(str(exc)) from None


# --------------------------------------------------------------------------
# radial
# --------------------------------------------------------------------------

@dataclass
class RadialSpec:
    problem: RadialProblem
    exact: Any = None          # callable t -> phi for manufactured problems


def radial_from_json(spec: dict, path: str = "$", points: int | None = None,
                     tol: float | None = None) -> RadialSpec:
    op = _operator(spec, path)
    n = op.cone.n
    c = _number(spec.get("chi", 0.0), path + ".chi")
    lambda0 = _number(spec.get("lambda0", 1.0), path + ".lambda0")
    t0 = _number(spec.get("t0", DEFAULT_T0), path + ".t0")
    pts = int(points if points is not None else spec.get("points", 128))
    exact = None
    if "manufactured" in spec:
        phi = parse_expression(spec["manufactured"], [T], path + ".manufactured")
        exact = _lambdify(phi, [T])
        d1 = _lambdify(sympy.diff(phi, T), [T])
        d2 = _lambdify(sympy.diff(phi, T, 2), [T])

        def psi(t, exact=exact, d1=d1, d2=d2):
            lam = radial_eigenvalues(d1(t), d2(t), t, c, n)
            return value(op, lam) * np.exp(-lambda0 * exact(t))

        boundary = Dirichlet(float(exact(np.array(t0))), float(exact(np.array(1.0))))
    else:
        psi_expr = parse_expression(_require(spec, "psi", path), [T], path + ".psi")
        psi = float(psi_expr) if psi_expr.is_number else _lambdify(psi_expr, [T])
        boundary = _boundary(_require(spec, "boundary", path), path + ".boundary")
    kwargs = {} if tol is None and "tol" not in spec else {"tol": float(tol if tol is not None else spec["tol"])}
    try:
        prob = RadialProblem(n, op, psi, lambda0, c, pts, t0, boundary, **kwargs)
    except ValueError as exc:
        raise SpecError(f"{path}: {exc}") from None
    return RadialSpec(prob, exact)


def _boundary(obj, path):
    if not isinstance(obj, dict) or len(obj) != 1:
        raise SpecError(f"{path}: expected {{'dirichlet': ...}} or {{'exhaustion': ...}}")
    (key, body), = obj.items()
    if key == "dirichlet":
        return Dirichlet(_number(_require(body, "inner", path + ".dirichlet"), path + ".dirichlet.inner"),
                         _number(_require(body, "outer", path + ".dirichlet"), path + ".dirichlet.outer"))
    if key == "exhaustion":
        ks = _require(body, "k", path + ".exhaustion")
        if not isinstance(ks, list) or not ks:
            raise SpecError(f"{path}.exhaustion.k: expected a nonempty list of integers")
        return Exhaustion(tuple(int(k) for k in ks))
    raise SpecError(f"{path}: unknown boundary kind {key!r}")


def write_radial_csv(path, t, phi, exact=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "phi"] + (["exact"] if exact is not None else []))
        for i in range(len(t)):
            row = [repr(float(t[i])), repr(float(phi[i]))]
            if exact is not None:
                row.append(repr(float(exact[i])))
            w.writerow(row)


def read_radial_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


# --------------------------------------------------------------------------
# torus
# --------------------------------------------------------------------------

@dataclass
class TorusSpec:
    problem: TorusProblem
    exact: Any = None            # manufactured solution on the grid
    psi_target: Any = None       # curvature target before the reduction
    ricci_background: Any = None


def _hermitian_field(obj, N: int, path: str) -> np.ndarray:
    """``{"11": e, "22": e, "12_re": e, "12_im": e}`` evaluated on the grid."""
    if not isinstance(obj, dict):
        raise SpecError(f"{path}: expected an object with entries 11, 22, 12_re, 12_im")
    coords = torus_coordinates(N)
    shape = (N,) * 4

    def field(key, default=0.0):
        expr = parse_expression(obj.get(key, default), TORUS_SYMBOLS, f"{path}.{key}")
        return np.broadcast_to(_lambdify(expr, TORUS_SYMBOLS)(*coords), shape)

    out = np.zeros(shape + (2, 2), dtype=complex)
    out[..., 0, 0] = field("11")
    out[..., 1, 1] = field("22")
    off = field("12_re") + 1j * field("12_im")
    out[..., 0, 1] = off
    out[..., 1, 0] = np.conj(off)
    return out


def _scalar_field(src, N: int, path: str) -> np.ndarray:
    expr = parse_expression(src, TORUS_SYMBOLS, path)
    return np.broadcast_to(_lambdify(expr, TORUS_SYMBOLS)(*torus_coordinates(N)), (N,) * 4).copy()


def torus_from_json(spec: dict, path: str = "$", N: int | None = None,
                    tol: float | None = None) -> TorusSpec:
    op = _operator(spec, path)
    N = int(N if N is not None else spec.get("N", 16))
    lambda0 = _number(spec.get("lambda0", 1.0), path + ".lambda0")
    if op.cone.n != 2:
        raise SpecError(f"{path}.operator: torus problems need n = 2")
    psi_target = ric = None
    exact = None
    if "ricci_background" in spec:
        ric = _hermitian_field(spec["ricci_background"], N, path + ".ricci_background")
        red = reduce_first_chern(ric, 2, lambda0)
        chi = red.chi_shift
        psi_target = _scalar_field(_require(spec, "psi", path), N, path + ".psi")
        psi = psi_target * np.exp(red.exponent_shift)
    else:
        chi = _hermitian_field(_require(spec, "chi", path), N, path + ".chi")
        if "manufactured" in spec:
            exact = _scalar_field(spec["manufactured"], N, path + ".manufactured")
            lam, _ = pencil_eigen(np.eye(2), chi + spectral_complex_hessian(exact))
            psi = value(op, lam) * np.exp(-lambda0 * exact)
        else:
            psi = _scalar_field(_require(spec, "psi", path), N, path + ".psi")
    kwargs = {} if tol is None and "tol" not in spec else {"tol": float(tol if tol is not None else spec["tol"])}
    try:
        prob = TorusProblem(N, op, chi, psi, lambda0, **kwargs)
    except ValueError as exc:
        raise SpecError(f"{path}: {exc}") from None
    return TorusSpec(prob, exact, psi_target, ric)


def write_torus_field(stem, u: np.ndarray) -> tuple[Path, Path]:
    """``stem.bin`` (float64, row-major over x1, y1, x2, y2) and ``stem.json`` header."""
    stem = Path(stem)
    N = u.shape[0]
    bin_path = stem.with_suffix(".bin")
    hdr_path = stem.with_suffix(".json")
    np.ascontiguousarray(u, dtype="<f8").tofile(bin_path)
    hdr = {"N": N, "h": 1.0 / N, "dtype": "float64", "byteorder": "little",
           "order": ["x1", "y1", "x2", "y2"], "file": bin_path.name}
    hdr_path.write_text(json.dumps(hdr, indent=2))
    return bin_path, hdr_path


def read_torus_field(header_path) -> np.ndarray:
    header_path = Path(header_path)
    hdr = json.loads(header_path.read_text())
    N = int(hdr["N"])
    return np.fromfile(header_path.parent / hdr["file"], dtype="<f8").reshape((N,) * 4)


# --------------------------------------------------------------------------
# curvature parameters
# --------------------------------------------------------------------------

def reduction_from_json(spec: dict, path: str = "$"):
    """``{"mixed": {alpha, beta, gamma, n}, "cone": ...}`` or ``{"first_chern": {n, sigma_deg}}``."""
    if "mixed" in spec:
        body = spec["mixed"]
        p = path + ".mixed"
        try:
            params = MixedRicciParams(
                _number(_require(body, "alpha", p), p + ".alpha"),
                _number(_require(body, "beta", p), p + ".beta"),
                _number(_require(body, "gamma", p), p + ".gamma"),
                int(_require(body, "n", p)),
            )
        except ValueError as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"{p}: {exc}") from None
        try:
            cone = cone_from_json(_require(spec, "cone", path), path + ".cone")
        except SpecError:
            raise
        except ValueError as exc:
            raise SpecError(str(exc)) from None
        return reduce_mixed(params, cone, sigma_deg=float(body.get("sigma_deg", 1.0)))
    if "first_chern" in spec:
        body = spec["first_chern"]
        p = path + ".first_chern"
        n = int(_require(body, "n", p))
        try:
            return reduce_first_chern(0.0, n, float(body.get("sigma_deg", 1.0)))
        except ValueError as exc:
            raise SpecError(f"{p}: {exc}") from None
    raise SpecError(f"{path}: expected a 'mixed' or 'first_chern' object")
