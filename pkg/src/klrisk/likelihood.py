"""Log-likelihoods, marginal likelihood by quadrature, score and information.

Exact observations contribute ``log f(x)``, right-censored ones ``log S(c)``.
For random-intercept models the likelihood of what is observed is the
conditional expectation of the complete-data likelihood given the
observation, i.e. ``int f(y_i | b) f_b(b) db`` per subject, evaluated here by
Gauss-Hermite quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .data import Dataset, GroupedDataset
from .errors import DomainError, NumericalError, UnsupportedError
from .families import ParametricFamily, analytic_mle, moment_estimate
from .optim import FitResult, maximize
from .random_effects import RandomEffectsModel, SubjectStats


@dataclass(frozen=True)
class InfoMatrices:
    """Observed information ``I`` and score variance ``J``, per observation."""

    I: np.ndarray
    J: np.ndarray
    n: int

    def trace_ratio(self) -> float:
        """``Tr(I^-1 J)``; equals the parameter count under a well-specified model."""
        return float(np.trace(np.linalg.solve(self.I, self.J)))

    def standard_errors(self) -> np.ndarray:
        """Asymptotic standard errors ``sqrt(diag(I^-1) / n)``."""
        return np.sqrt(np.diag(np.linalg.inv(self.I)) / self.n)


def loglik_terms(family: ParametricFamily, theta, data: Dataset) -> np.ndarray:
    """Per-observation log-likelihood contributions."""
    th = family.validate(theta)
    t = data.times
    ev = data.events
    out = np.empty(t.size)
    if ev.any():
        out[ev] = family.logpdf(th, t[ev])
    if not ev.all():
        out[~ev] = family.logsf(th, t[~ev])
    return out


def loglik(family: ParametricFamily, theta, data: Dataset) -> float:
    """Sum of ``log f`` over exact and ``log S`` over censored observations.

    >>> from klrisk.data import Dataset, Observation
    >>> d = Dataset((Observation.exact(2.0), Observation.censored(3.0)))
    >>> round(loglik(ParametricFamily("exponential"), [0.5], d), 6)
    -3.193147
    """
    return float(np.sum(loglik_terms(family, theta, data)))


def fit_mle(family: ParametricFamily, data: Dataset, theta0=None, tol: float = 1e-8) -> FitResult:
    """Numerical MLE on the unconstrained scale (log / logit).

    The mean log-likelihood is maximized so that the gradient tolerance does
    not depend on the sample size; the returned ``loglik_at_max`` is the total.
    """
    if data.n_events == 0 and family.is_time_to_event:
        raise DomainError("no events in the data")
    if theta0 is None:
        try:
            theta0 = analytic_mle(family, data)
        except UnsupportedError:
            if family.name == "weibull" and not data.events.all():
                # exponential fit as a Weibull with unit shape
                theta0 = np.array([1.0, data.times.sum() / data.n_events])
            else:
                theta0 = moment_estimate(family, data.times)
    n = data.n

    def objective(eta):
        return loglik(family, family.from_unconstrained(eta), data) / n

    res = maximize(objective, family.to_unconstrained(theta0), tol=tol)
    res.theta_hat = family.from_unconstrained(res.theta_hat)
    res.loglik_at_max = loglik(family, res.theta_hat, data)
    res.history = [h * n for h in res.history]
    res.n_obs = n
    return res


def score_and_information(family: ParametricFamily, theta, data: Dataset) -> tuple[np.ndarray, InfoMatrices]:
    """Score vector (total) and per-observation ``I`` and ``J`` at ``theta``.

    All derivatives are central finite differences on the natural scale with
    step ``1e-5 * max(1, |theta_k|)``; the Hessian differences the score with
    a step ten times larger. For a parameter closer than 0.1 to the edge of
    its interval the step is reduced in proportion to that distance, so the
    difference stencil stays inside the domain and keeps its relative accuracy.
    """
    th = family.validate(theta)
    p = th.size
    n = data.n
    room = family.boundary_distance(th)

    def steps(scale):
        return np.minimum(scale * np.maximum(1.0, np.abs(th)), 10.0 * scale * room)

    def per_obs_scores(point):
        h = steps(1e-5)
        cols = []
        for k in range(p):
            e = np.zeros(p)
            e[k] = h[k]
            up = loglik_terms(family, point + e, data)
            dn = loglik_terms(family, point - e, data)
            cols.append((up - dn) / (2 * h[k]))
        return np.column_stack(cols)

    scores = per_obs_scores(th)
    score = scores.sum(axis=0)
    hh = steps(1e-4)
    hess = np.empty((p, p))
    for k in range(p):
        e = np.zeros(p)
        e[k] = hh[k]
        hess[k] = (per_obs_scores(th + e).sum(axis=0) - per_obs_scores(th - e).sum(axis=0)) / (2 * hh[k])
    hess = 0.5 * (hess + hess.T)
    if not (np.all(np.isfinite(score)) and np.all(np.isfinite(hess))):
        raise NumericalError("non-finite finite differences", {"theta": th.tolist()})
    centered = scores - scores.mean(axis=0)
    J = centered.T @ centered / n
    return score, InfoMatrices(I=-hess / n, J=0.5 * (J + J.T), n=n)


# -- Gauss-Hermite quadrature ------------------------------------------------


def _hermite_functions(x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Hermite polynomials ``h_{n-1}(x), h_n(x)`` by three-term recurrence.

    Normalized so that ``int h_j h_k exp(-x^2) dx = delta_jk``.
    """
    prev = np.zeros_like(x)
    cur = np.full_like(x, math.pi ** -0.25)
    for k in range(n):
        nxt = math.sqrt(2.0 / (k + 1)) * x * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
    return prev, cur


@lru_cache(maxsize=None)
def gauss_hermite(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int g(x) exp(-x^2) dx``.

    Starting values come from the eigenvalues of the symmetric Jacobi matrix;
    each root is then polished by Newton steps on the recurrence. The weights
    follow from ``w_i = 1 / (n h_{n-1}(x_i)^2)``.
    """
    if int(nodes) != nodes or nodes < 1:
        raise DomainError(f"node count must be a positive integer, got {nodes!r}")
    n = int(nodes)
    off = np.sqrt(np.arange(1, n) / 2.0)
    x = np.linalg.eigvalsh(np.diag(off, 1) + np.diag(off, -1))
    for _ in range(10):
        h_prev, h_n = _hermite_functions(x, n)
        dx = h_n / (math.sqrt(2.0 * n) * h_prev)
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15 * max(1.0, np.max(np.abs(x))):
            break
    x = 0.5 * (x - x[::-1])  # enforce exact symmetry
    h_prev, _ = _hermite_functions(x, n)
    w = 1.0 / (n * h_prev * h_prev)
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _nodes_for(model, theta, tau, stats, nodes, adaptive):
    """Per-subject abscissae ``b_ik`` and log weights for ``int g(b) phi(b; tau^2) db``.

    Plain rule: ``b = sqrt(2) tau x_k`` with weights ``w_k / sqrt(pi)``.
    Adaptive rule: nodes centred at the conditional mode of ``b`` and scaled by
    the curvature there, ``b = m_i + sqrt(2) s_i x_k``, weights
    ``sqrt(2) s_i w_k exp(x_k^2) phi(b_ik)``; exact whenever the integrand is
    Gaussian in ``b``.
    """
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau!r}")
    if int(nodes) != nodes or nodes < 5:
        raise DomainError("at least 5 quadrature nodes are required")
    x, w = gauss_hermite(int(nodes))
    m = stats.size.size
    if not adaptive:
        b = np.broadcast_to(math.sqrt(2.0) * tau * x, (m, x.size))
        return b, np.broadcast_to(np.log(w / math.sqrt(math.pi)), (m, x.size))
    mode = model.posterior_mode(theta, tau, stats)
    curv = 1.0 / (tau * tau) - model.conditional_curvature(theta, mode, stats)
    s = 1.0 / np.sqrt(curv)
    b = mode[:, None] + math.sqrt(2.0) * s[:, None] * x[None, :]
    logw = (
        np.log(math.sqrt(2.0) * s)[:, None]
        + (np.log(w) + x * x)[None, :]
        + model.random_effect_logpdf(b, tau)
    )
    return b, logw


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.sum(np.exp(a - m[:, None]), axis=1))


def marginal_loglik_terms(
    model: RandomEffectsModel,
    theta,
    tau: float,
    data: GroupedDataset,
    nodes: int = 40,
    stats=None,
    adaptive: bool = True,
) -> np.ndarray:
    """Per-subject log of ``int f(y_i | b) phi(b; tau^2) db`` by Gauss-Hermite quadrature."""
    stats = model.stats(data) if stats is None else stats
    theta = model.validate(theta)
    b, logw = _nodes_for(model, theta, tau, stats, nodes, adaptive)
    return _logsumexp_rows(model.conditional_loglik(theta, b, stats) + logw)


def marginal_score(
    model: RandomEffectsModel, theta, tau: float, stats: SubjectStats, nodes: int = 40, adaptive: bool = True
) -> np.ndarray:
    """Gradient (natural scale) of the marginal log-likelihood.

    Each subject contributes its conditional score averaged over the nodes
    with normalized posterior weights.
    """
    theta = model.validate(theta)
    b, logw = _nodes_for(model, theta, tau, stats, nodes, adaptive)
    a = model.conditional_loglik(theta, b, stats) + logw
    post = np.exp(a - a.max(axis=1, keepdims=True))
    post /= post.sum(axis=1, keepdims=True)
    d_theta, _ = model.conditional_score(theta, b, stats)
    return np.einsum("ik,ikp->p", post, d_theta)


def marginal_loglik(
    model: RandomEffectsModel, theta, tau: float, data: GroupedDataset, nodes: int = 40, adaptive: bool = True
) -> float:
    """Marginal log-likelihood of a random-intercept model (summed over subjects)."""
    return float(np.sum(marginal_loglik_terms(model, theta, tau, data, nodes, adaptive=adaptive)))


def fit_marginal(
    model: RandomEffectsModel,
    data: GroupedDataset,
    tau: float,
    nodes: int = 40,
    theta0=None,
    tol: float = 1e-8,
    adaptive: bool = True,
) -> FitResult:
    """Marginal maximum likelihood for the fixed parameters at a given ``tau``."""
    stats = model.stats(data)
    if theta0 is None:
        grand = float(np.sum(stats.total) / np.sum(stats.size))
        if model.kind == "poisson-lognormal":
            theta0 = [math.log(max(grand, 1e-3))]
        elif model.theta_dim == 2:
            pooled = float(np.sum(stats.within_ss) / max(np.sum(stats.size - 1), 1.0))
            theta0 = [grand, max(pooled, 1e-6)]
        else:
            theta0 = [grand]
    n_obs = float(np.sum(stats.size))

    def objective(eta):
        th = model.from_unconstrained(eta)
        return float(np.sum(marginal_loglik_terms(model, th, tau, data, nodes, stats, adaptive))) / n_obs

    def gradient(eta):
        th = model.from_unconstrained(eta)
        g = marginal_score(model, th, tau, stats, nodes, adaptive)
        if model.theta_dim == 2:
            g = g * np.array([1.0, th[1]])
        return g / n_obs

    res = maximize(objective, model.to_unconstrained(theta0), tol=tol, gradient=gradient)
    res.theta_hat = model.from_unconstrained(res.theta_hat)
    res.loglik_at_max = marginal_loglik(model, res.theta_hat, tau, data, nodes, adaptive)
    return res
