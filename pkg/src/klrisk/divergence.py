"""Kullback-Leibler divergence on the full and on the right-censored observation.

Argument order follows the "model given truth" convention: ``kl_full(model,
truth)`` is ``E_truth[log f_truth(X) / f_model(X)]``, the expected loss from
using ``model`` in place of ``truth``.

Under fixed right censoring at ``C`` only ``min(X, C)`` and the indicator
``X <= C`` are seen, so the likelihood ratio is ``f1/f2`` below ``C`` and
``S1(C)/S2(C)`` above it, giving::

    KL_C = int_0^C log(f1/f2) f1 dx + log(S1(C)/S2(C)) S1(C)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericalError, UnsupportedError
from .families import ParametricFamily, TrueModel, moment_estimate, sample
from .optim import FitResult, maximize

QUAD_EPSABS = 1e-9
# floor on the accepted error for very large divergences, where 1e-9 is below
# the rounding error of the result itself
QUAD_RELFLOOR = 1e-12
QUAD_LIMIT = 200
MOMENT_DRAWS = 10_000
MOMENT_SEED = 20_080_301

# truth quantiles used as interior break points of the adaptive quadrature; the
# upper ones are given as tail probabilities so heavy right tails are resolved
_BREAK_PROBS = (1e-4, 0.01, 0.1, 0.25, 0.5)
_TAIL_PROBS = (0.25, 0.1, 0.01, 1e-4, 1e-6, 1e-8, 1e-11, 1e-14, 1e-18, 1e-24)


class DivergenceUndefinedError(DomainError):
    """The model law is not absolutely continuous w.r.t. the truth on its support."""


def _law(arg) -> tuple[ParametricFamily, np.ndarray]:
    if isinstance(arg, TrueModel):
        return arg.family, arg.theta
    family, theta = arg
    return family, family.validate(theta)


def _check_support(model, truth):
    """Model density must be positive at 64 truth quantiles."""
    fm, tm = model
    ft, tt = truth
    if ft.is_discrete != fm.is_discrete:
        raise DivergenceUndefinedError(f"cannot compare {fm} with {ft}")
    if ft.is_discrete:
        if fm.trials != ft.trials:
            raise DivergenceUndefinedError(f"binomial trial counts differ ({fm.trials} vs {ft.trials})")
        return
    xs = ft.ppf(tt, (np.arange(64) + 0.5) / 64)
    lo, hi = fm.support_bounds()
    with np.errstate(divide="ignore"):
        bad = (xs < lo) | (xs > hi) | ~np.isfinite(fm.logpdf(tm, np.clip(xs, lo, hi)))
    if bad.any():
        raise DivergenceUndefinedError(
            f"{fm}{tuple(tm)} puts no mass where {ft}{tuple(tt)} does (e.g. x={xs[bad][0]:.6g})"
        )


def _quad(f, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, epsabs=QUAD_EPSABS / 16, epsrel=QUAD_RELFLOOR / 4, limit=QUAD_LIMIT, full_output=1)
    if len(out) > 3:
        raise NumericalError(
            f"quadrature on [{a}, {b}] did not converge: {out[3]}",
            {"a": a, "b": b, "estimate": out[0], "abserr": out[1]},
        )
    return out[0], out[1]


def _integrate_log_ratio(model, truth, upper=math.inf) -> float:
    """``int log(f_truth/f_model) f_truth`` over the support up to ``upper``."""
    fm, tm = model
    ft, tt = truth
    lo, _ = ft.support_bounds()

    def integrand(x):
        lt = ft.logpdf(tt, x)
        if not math.isfinite(lt):
            return 0.0
        return math.exp(lt) * (lt - fm.logpdf(tm, x))

    qs = np.concatenate([ft.ppf(tt, np.array(_BREAK_PROBS)), ft.isf(tt, np.array(_TAIL_PROBS))])
    pts = [float(q) for q in qs if lo < q < upper and math.isfinite(q)]
    edges = [lo] + sorted(set(pts)) + [upper]
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = _quad(integrand, a, b)
        total += v
        err += e
    allowed = max(QUAD_EPSABS, QUAD_RELFLOOR * abs(total))
    if err > allowed:
        raise NumericalError(f"quadrature error estimate {err:.3g} exceeds {allowed:.3g}")
    return total


def kl_full(model, truth) -> float:
    """Divergence of ``model`` from ``truth`` on the complete observation.

    Both arguments are ``(family, theta)`` pairs (``truth`` may also be a
    :class:`TrueModel`). Continuous laws are integrated by adaptive
    Gauss-Kronrod quadrature (absolute tolerance 1e-9, relaxed to 1e-12
    relative for divergences above 1e3, at most 200
    subintervals per piece); binomials are summed exactly.
    """
    model, truth = _law(model), _law(truth)
    _check_support(model, truth)
    ft, tt = truth
    fm, tm = model
    if ft.is_discrete:
        k = np.arange(ft.trials + 1, dtype=float)
        lt = ft.logpdf(tt, k)
        return float(np.sum(np.exp(lt) * (lt - fm.logpdf(tm, k))))
    return _integrate_log_ratio(model, truth)


def kl_censored(model, truth, C: float) -> float:
    """Divergence restricted to what is observed under right censoring at ``C``."""
    model, truth = _law(model), _law(truth)
    if not C > 0 or not math.isfinite(C):
        raise DomainError(f"censoring time must be positive and finite, got {C!r}")
    fm, tm = model
    ft, tt = truth
    if not (fm.is_time_to_event and ft.is_time_to_event):
        raise UnsupportedError("censored divergence needs time-to-event families")
    _check_support(model, truth)
    body = _integrate_log_ratio(model, truth, upper=float(C))
    ls_t = float(ft.logsf(tt, C))
    ls_m = float(fm.logsf(tm, C))
    atom = math.exp(ls_t) * (ls_t - ls_m) if math.isfinite(ls_t) else 0.0
    return body + atom


def kl_oracle(model, truth, C: float | None = None, n: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of the divergence: mean log-likelihood ratio under the truth.

    Returns ``(estimate, standard_error)``. With ``C`` the ratio is taken on
    the censored observation (density ratio for ``X <= C``, survival ratio
    at ``C`` otherwise).
    """
    model, truth = _law(model), _law(truth)
    if n < 1000:
        raise DomainError("the Monte Carlo oracle needs at least 1000 draws")
    _check_support(model, truth)
    fm, tm = model
    ft, tt = truth
    x = sample(ft, tt, n, seed)
    if C is None:
        lr = ft.logpdf(tt, x) - fm.logpdf(tm, x)
    else:
        if not C > 0:
            raise DomainError(f"censoring time must be positive, got {C!r}")
        lr = np.where(
            x <= C,
            ft.logpdf(tt, np.minimum(x, C)) - fm.logpdf(tm, np.minimum(x, C)),
            float(ft.logsf(tt, C)) - float(fm.logsf(tm, C)),
        )
    return float(lr.mean()), float(lr.std(ddof=1) / math.sqrt(n))


def kl(model, truth, C: float | None = None) -> float:
    """``kl_full`` or ``kl_censored`` depending on whether ``C`` is given."""
    return kl_full(model, truth) if C is None else kl_censored(model, truth, C)


# -- misspecification risk -----------------------------------------------------


@lru_cache(maxsize=8)
def _tanh_sinh(level: int = 6, tmax: float = 3.2):
    """Tanh-sinh nodes on (0, 1) as ``(u, 1 - u, weights)``; both tails kept accurate."""
    h = 2.0 ** -level
    t = np.arange(-int(tmax / h), int(tmax / h) + 1) * h
    s = 0.5 * math.pi * np.sinh(t)
    u = 1.0 / (1.0 + np.exp(-2 * s))
    q = 1.0 / (1.0 + np.exp(2 * s))
    w = h * 0.5 * math.pi * np.cosh(t) / (2 * np.cosh(s) ** 2)
    keep = (u > 0) & (q > 0) & (w > 0)
    return u[keep], q[keep], w[keep]


def _truth_nodes(truth, C):
    """Fixed quadrature nodes in ``x`` for expectations under the truth (below C if censored)."""
    ft, tt = truth
    u, q, w = _tanh_sinh()
    mass = 1.0 if C is None else float(ft.cdf(tt, C))
    tail = 0.0 if C is None else float(ft.sf(tt, C))
    v = mass * u
    upper_q = tail + mass * q  # 1 - v, without cancellation
    x = np.where(v < 0.5, ft.ppf(tt, np.minimum(v, 0.5)), ft.isf(tt, np.minimum(upper_q, 0.5)))
    if C is not None:
        x = np.minimum(x, C)
    return x, w * mass


def _expected_loglik(family, theta, truth, C, nodes):
    """``E_truth[log-likelihood of one observation under (family, theta)]``."""
    x, w = nodes
    val = float(np.sum(w * family.logpdf(theta, x)))
    if C is not None:
        val += float(truth[0].sf(truth[1], C)) * float(family.logsf(theta, C))
    return val


@dataclass
class MisspecificationRisk:
    """Best approximating parameter and the divergence it attains.

    ``on_boundary`` flags an optimum that drifted towards the edge of the
    parameter box (or an optimizer that did not converge), in which case
    ``theta_opt`` is only the last iterate.
    """

    theta_opt: np.ndarray
    risk: float
    on_boundary: bool
    fit: FitResult


def misspecification_risk(family: ParametricFamily, truth: TrueModel, C: float | None = None) -> MisspecificationRisk:
    """Minimize the divergence of ``family`` from ``truth`` over the parameter.

    Minimizing ``KL(P_theta | P*)`` is the same as maximizing the expected
    log-likelihood ``E*[log f_theta]``; that expectation is computed on a
    fixed tanh-sinh grid in the truth's quantile scale so the objective is a
    smooth function of ``theta``. The start is the method-of-moments estimate
    from 10^4 truth draws with a fixed seed.
    """
    law = _law(truth)
    ft, tt = law
    if C is not None and not (family.is_time_to_event and ft.is_time_to_event):
        raise UnsupportedError("censored divergence needs time-to-event families")
    draws = sample(ft, tt, MOMENT_DRAWS, MOMENT_SEED)
    if family.is_time_to_event and np.any(draws < 0):
        raise DivergenceUndefinedError(f"{family} cannot represent negative outcomes of {ft}")
    theta0 = moment_estimate(family, draws)
    _check_support((family, theta0), law)
    if ft.is_discrete:
        k = np.arange(ft.trials + 1, dtype=float)
        nodes = (k, np.exp(ft.logpdf(tt, k)))
    else:
        nodes = _truth_nodes(law, C)

    def objective(eta):
        return _expected_loglik(family, family.from_unconstrained(eta), law, C, nodes)

    fit = maximize(objective, family.to_unconstrained(theta0), tol=1e-9)
    eta = fit.theta_hat
    theta_opt = family.from_unconstrained(eta)
    log_scale = eta[1:] if family.name == "normal" else eta
    on_boundary = (not fit.converged) or bool(np.any(np.abs(log_scale) > 25))
    fit.theta_hat = theta_opt
    return MisspecificationRisk(theta_opt, kl((family, theta_opt), law, C), on_boundary, fit)
