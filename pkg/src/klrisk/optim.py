"""Quasi-Newton maximization and the constraint-matching bisection.

The maximizer is a plain BFGS ascent on an unconstrained vector with
central-difference gradients and backtracking (Armijo) line search.
Positive parameters are handled by callers through log reparametrization.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, MonotonicityError, NumericalError, StartError

ARMIJO = 1e-4
SHRINK = 0.5
MIN_STEP = 1e-14
APPROX_WOLFE = 0.1


@dataclass
class FitResult:
    """Outcome of a maximization.

    ``loglik_at_max`` is the objective value at ``theta_hat``; ``p`` counts the
    free parameters for information criteria. ``n_obs`` records the sample
    size when the objective is a log-likelihood of a dataset.
    """

    theta_hat: np.ndarray
    loglik_at_max: float
    grad_norm: float
    iterations: int
    converged: bool
    p: int
    history: list[float] = field(default_factory=list, repr=False)
    n_evals: int = 0
    n_obs: int | None = None


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central differences with step ``1e-5 * max(1, |x_k|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        h = 1e-5 * max(1.0, abs(x[k]))
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (xp[k] - xm[k])
    return g


def numeric_hessian(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Symmetric finite-difference Hessian built from central-difference gradients."""
    x = np.asarray(x, dtype=float)
    p = x.size
    hess = np.empty((p, p))
    for k in range(p):
        h = step * max(1.0, abs(x[k]))
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        hess[k] = (numeric_gradient(f, xp) - numeric_gradient(f, xm)) / (xp[k] - xm[k])
    return 0.5 * (hess + hess.T)


def maximize(
    objective: Callable[[np.ndarray], float],
    theta0,
    tol: float = 1e-8,
    max_iter: int = 500,
    gradient: Callable[[np.ndarray], np.ndarray] | None = None,
    p: int | None = None,
    inv_hessian0: np.ndarray | None = None,
) -> FitResult:
    """Maximize ``objective`` by BFGS from ``theta0``.

    Parameters
    ----------
    objective : callable
        Maps a 1-d float array to a real number (``-inf`` is allowed away
        from the start and is treated as a rejected trial point).
    theta0 : array_like
        Starting point; the objective must be finite there.
    tol : float
        Convergence threshold on the infinity norm of the gradient.
    max_iter : int
        Iteration cap; reaching it returns ``converged=False``.
    gradient : callable, optional
        Replacement for the built-in central-difference gradient.
    p : int, optional
        Effective parameter count stored on the result (defaults to ``len(theta0)``).
    inv_hessian0 : ndarray, optional
        Initial approximation of the inverse Hessian of ``-objective``
        (identity with a scaled first step when omitted).

    Raises
    ------
    StartError
        If the objective is not finite at ``theta0``.
    NumericalError
        If backtracking shrinks the step below 1e-14 without progress.
    """
    x = np.array(theta0, dtype=float).ravel()
    n_evals = 0

    def F(z):
        nonlocal n_evals
        n_evals += 1
        try:
            v = float(objective(z))
        except (ValueError, ArithmeticError):
            return -math.inf
        return v if not math.isnan(v) else -math.inf

    grad = gradient if gradient is not None else (lambda z: numeric_gradient(F, z))

    fx = F(x)
    if not math.isfinite(fx):
        raise StartError(f"objective is not finite at the start point ({fx})", {"theta0": x.tolist()})
    g = np.asarray(grad(x), dtype=float)
    if not np.all(np.isfinite(g)):
        raise StartError("gradient is not finite at the start point", {"theta0": x.tolist()})

    dim = x.size
    seeded = inv_hessian0 is not None
    H = np.array(inv_hessian0, dtype=float) if seeded else np.eye(dim)  # approximates inv Hessian of -objective
    history = [fx]
    it = 0
    gnorm = float(np.max(np.abs(g))) if dim else 0.0
    while gnorm >= tol and it < max_iter:
        it += 1
        d = H @ g  # ascent direction
        slope = float(g @ d)
        if slope <= 0 or not np.all(np.isfinite(d)):
            H = np.eye(dim)
            d = g.copy()
            slope = float(g @ d)
        if it == 1 and not seeded:
            d = d / max(1.0, float(np.max(np.abs(d))))
            slope = float(g @ d)

        noise = 64 * np.finfo(float).eps * max(1.0, abs(fx))
        alpha = 1.0
        while True:
            x_new = x + alpha * d
            f_new = F(x_new)
            if math.isfinite(f_new):
                if f_new >= fx + ARMIJO * alpha * slope:
                    g_new = np.asarray(grad(x_new), dtype=float)
                    break
                if f_new >= fx - noise:
                    # objective differences are at rounding level: accept unless the
                    # directional derivative shows the step overshot the 1-d maximum
                    g_new = np.asarray(grad(x_new), dtype=float)
                    if float(g_new @ d) >= -(1 - 2 * APPROX_WOLFE) * slope:
                        break
            alpha *= SHRINK
            if alpha < MIN_STEP:
                raise NumericalError(
                    "line search stagnated",
                    {
                        "theta": x.tolist(),
                        "objective": fx,
                        "grad_norm": gnorm,
                        "iterations": it,
                    },
                )

        s = x_new - x
        y = g_new - g  # gradient of the objective; -y is the gradient change of -objective
        sy = -float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1 and not seeded:
                H = np.eye(dim) * (sy / float(y @ y))
            rho = 1.0 / sy
            Hy = H @ (-y)
            H = H + (rho * rho * ((-y) @ Hy) + rho) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
        x, fx, g = x_new, f_new, g_new
        history.append(fx)
        gnorm = float(np.max(np.abs(g)))

    return FitResult(
        theta_hat=x,
        loglik_at_max=fx,
        grad_norm=gnorm,
        iterations=it,
        converged=gnorm < tol,
        p=dim if p is None else int(p),
        history=history,
        n_evals=n_evals,
    )


def match_constraint(
    fit_at: Callable[[float], tuple[FitResult, float]],
    nu: float,
    kappa_bracket: tuple[float, float],
    max_iter: int = 60,
    tol: float | None = None,
) -> tuple[float, FitResult]:
    """Find the penalty weight whose fit has constraint value ``nu``.

    ``fit_at(kappa)`` returns ``(fit, J)`` where ``J`` is nonincreasing in
    ``kappa``. Bisection runs on ``log(kappa)`` inside ``kappa_bracket`` until
    ``|J - nu| < tol`` (default ``1e-8 * max(1, nu)``) or ``max_iter`` halvings. If the lower end
    already satisfies ``J <= nu`` the constraint is slack there and the lower
    end is returned unchanged.
    """
    lo, hi = float(kappa_bracket[0]), float(kappa_bracket[1])
    if not (0 < lo < hi):
        raise BracketError(f"invalid bracket ({lo}, {hi})")
    target_tol = 1e-8 * max(1.0, nu) if tol is None else float(tol)

    fit_lo, j_lo = fit_at(lo)
    if j_lo <= nu:
        return lo, fit_lo
    fit_hi, j_hi = fit_at(hi)
    if j_hi > nu:
        raise BracketError(
            f"J(kappa={hi:g}) = {j_hi:.6g} still exceeds nu = {nu:.6g}; widen the bracket",
            {"lo": lo, "hi": hi, "J_lo": j_lo, "J_hi": j_hi},
        )
    if j_lo < j_hi - 1e-6:
        raise MonotonicityError("J increases with kappa across the bracket", {"J_lo": j_lo, "J_hi": j_hi})
    if abs(j_hi - nu) < target_tol:
        return hi, fit_hi

    log_lo, log_hi = math.log(lo), math.log(hi)
    best = (math.inf, hi, fit_hi)
    for _ in range(max_iter):
        log_mid = 0.5 * (log_lo + log_hi)
        kappa = math.exp(log_mid)
        fit, j = fit_at(kappa)
        if j > j_lo + 1e-6 or j < j_hi - 1e-6:
            raise MonotonicityError(
                f"J({kappa:.6g}) = {j:.10g} falls outside [{j_hi:.10g}, {j_lo:.10g}]",
                {"kappa": kappa, "J": j, "J_lo": j_lo, "J_hi": j_hi},
            )
        err = abs(j - nu)
        if err < best[0]:
            best = (err, kappa, fit)
        if err < target_tol:
            return kappa, fit
        if j > nu:
            log_lo, j_lo = log_mid, j
        else:
            log_hi, j_hi = log_mid, j
    return best[1], best[2]
