"""Admissibility-preserving damped Newton iteration shared by the solvers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MAX_HALVINGS = 50


class InitializationError(RuntimeError):
    """No admissible starting point was found."""


class NonConvergenceError(RuntimeError):
    """Newton stagnated; ``report`` holds the history up to the failure."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = float("inf")
    min_margin: float = float("nan")
    residual_history: list = field(default_factory=list)
    damping_history: list = field(default_factory=list)
    margin_history: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    continuation: list = field(default_factory=list)
    converged: bool = False
    notes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "min_margin": self.min_margin,
            "residual_history": self.residual_history,
            "damping_history": self.damping_history,
            "margin_history": self.margin_history,
            "linear_iterations": self.linear_iterations,
            "continuation": self.continuation,
            "converged": self.converged,
            **self.notes,
        }


def damped_newton(u, evaluate, solve, *, tol: float, max_iter: int = 60,
                  report: SolveReport | None = None):
    """Solve ``F(u) = 0`` keeping every accepted iterate admissible.

    ``evaluate(u)`` returns ``(residual, margin, state)`` where ``margin`` is the
    smallest admissibility slack (positive inside the cone) and ``residual`` is
    None when ``u`` is inadmissible.  ``solve(u, state, rhs)`` returns the
    Newton step and optionally a linear-iteration count as ``(step, its)``.

    A trial step is halved until it is admissible and the sup residual drops;
    after ``MAX_HALVINGS`` halvings the iteration gives up.
    """
    report = report or SolveReport()
    res, margin, state = evaluate(u)
    if res is None or not margin > 0:
        raise InitializationError("initial iterate is not admissible")
    rnorm = float(np.max(np.abs(res)))
    report.residual_history.append(rnorm)
    report.margin_history.append(float(margin))
    for it in range(max_iter):
        if rnorm <= tol:
            break
        step, lin_its = solve(u, state, -res)
        report.linear_iterations.append(lin_its)
        alpha = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = u + alpha * step
            t_res, t_margin, t_state = evaluate(trial)
            if t_res is not None and t_margin > 0:
                t_norm = float(np.max(np.abs(t_res)))
                if t_norm < rnorm:
                    break
            alpha *= 0.5
        else:
            report.iterations = it
            report.residual = rnorm
            report.min_margin = float(margin)
            raise NonConvergenceError(
                f"line search failed after {MAX_HALVINGS} halvings at residual {rnorm:.3e}", report)
        u, res, margin, state, rnorm = trial, t_res, t_margin, t_state, t_norm
        report.damping_history.append(alpha)
        report.residual_history.append(rnorm)
        report.margin_history.append(float(margin))
        log.debug("newton %d: residual %.3e step %.3g margin %.3e", it, rnorm, alpha, margin)
    else:
        if rnorm > tol:
            report.iterations = max_iter
            report.residual = rnorm
            report.min_margin = float(margin)
            raise NonConvergenceError(f"no convergence in {max_iter} iterations "
                                      f"(residual {rnorm:.3e})", report)
    report.iterations = len(report.damping_history)
    report.residual = rnorm
    report.min_margin = float(margin)
    report.converged = True
    return u, state, report
