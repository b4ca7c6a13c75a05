"""Penalized spline log-hazard estimation and its sieve (constrained) counterpart.

The hazard is ``h(u | z) = exp(alpha(u) + beta'z)`` with ``alpha(u) = sum_j a_j
B_j(u)`` a clamped cubic B-spline on ``[0, T]``. The roughness penalty is
``J(a) = int alpha''(u)^2 du = a' Omega a``. Because ``alpha`` is linear in
``a`` the log-likelihood is concave in ``(a, beta)``, so

* the penalized estimator maximizes ``loglik - kappa * J``, and
* the sieve estimator maximizes ``loglik`` subject to ``J <= nu``;

both families of fits coincide, with the Lagrange multiplier of the active
constraint equal to the penalty weight that reproduces ``J = nu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.interpolate import BSpline

from .data import Dataset
from .errors import DegenerateError, DomainError, RangeError
from .optim import FitResult, match_constraint, maximize

DEGREE = 3
DEFAULT_BASIS_SIZE = 12
GAUSS_POINTS = 7
SIEVE_TOL = 1e-8  # absolute tolerance on J(theta) - nu at an active constraint
_PENALTY_GAUSS_POINTS = 3  # B'' products are quadratic per interval


class SplineBasis:
    """Clamped cubic B-spline basis over strictly increasing breakpoints.

    ``m = len(breakpoints) + 2`` basis functions; ``breakpoints[0]`` and
    ``breakpoints[-1]`` are the ends of the domain.
    """

    def __init__(self, breakpoints):
        br = np.asarray(breakpoints, dtype=float).ravel()
        if br.size < 2 or not np.all(np.isfinite(br)) or np.any(np.diff(br) <= 0):
            raise DomainError("breakpoints must be finite and strictly increasing (at least 2)")
        self.breakpoints = br
        self.knots = np.concatenate([np.repeat(br[0], DEGREE), br, np.repeat(br[-1], DEGREE)])
        self.m = br.size + DEGREE - 1
        self._spline = BSpline(self.knots, np.eye(self.m), DEGREE, extrapolate=True)
        self._omega = None
        self._factor = None

    @property
    def lower(self) -> float:
        return float(self.breakpoints[0])

    @property
    def upper(self) -> float:
        return float(self.breakpoints[-1])

    def design(self, x, deriv: int = 0) -> np.ndarray:
        """Basis (or its ``deriv``-th derivative) evaluated at ``x``: shape ``(len(x), m)``."""
        x = np.clip(np.asarray(x, dtype=float).ravel(), self.lower, self.upper)
        return self._spline(x, nu=deriv)

    def greville(self) -> np.ndarray:
        """Knot averages; coefficients ``c0 + c1 * greville`` reproduce ``c0 + c1 u``."""
        t = self.knots
        return np.array([t[j + 1 : j + DEGREE + 1].mean() for j in range(self.m)])

    def affine_coefficients(self, intercept: float, slope: float) -> np.ndarray:
        return intercept + slope * self.greville()

    @property
    def penalty_factor(self) -> np.ndarray:
        """``R`` with ``Omega = R' R``: rows are weighted ``B''`` values at Gauss points."""
        if self._factor is None:
            self._factor = _penalty_factor(self)
            self._factor.setflags(write=False)
        return self._factor

    @property
    def omega(self) -> np.ndarray:
        if self._omega is None:
            self._omega = penalty_matrix(self)
            self._omega.setflags(write=False)
        return self._omega

    def roughness(self, a) -> float:
        """``J(a) = a' Omega a``, evaluated as ``||R a||^2`` (no cancellation, never negative)."""
        r = self.penalty_factor @ np.asarray(a, dtype=float)
        return float(r @ r)


def make_knots(data: Dataset, m: int = DEFAULT_BASIS_SIZE) -> SplineBasis:
    """``m`` basis functions on equally spaced breakpoints over ``[0, max time]``."""
    if m < 4:
        raise DomainError("a cubic spline basis needs at least 4 functions")
    t_max = float(np.max(data.times))
    if t_max <= 0:
        raise DegenerateError("all observation times are zero")
    return SplineBasis(np.linspace(0.0, t_max, m - DEGREE + 1))


def _as_basis(knots) -> SplineBasis:
    return knots if isinstance(knots, SplineBasis) else SplineBasis(knots)


def _penalty_factor(basis: SplineBasis) -> np.ndarray:
    gx, gw = np.polynomial.legendre.leggauss(_PENALTY_GAUSS_POINTS)
    br = basis.breakpoints
    mid = 0.5 * (br[1:] + br[:-1])
    half = 0.5 * np.diff(br)
    x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    return np.sqrt(w)[:, None] * basis.design(x, deriv=2)


def penalty_matrix(knots) -> np.ndarray:
    """Gram matrix ``Omega_jk = int B_j''(u) B_k''(u) du`` over the spline domain.

    Second derivatives of cubic B-splines are piecewise linear, so a 3-point
    Gauss-Legendre rule per knot interval integrates every product exactly.
    """
    r = _penalty_factor(_as_basis(knots))
    omega = r.T @ r
    return 0.5 * (omega + omega.T)


@dataclass
class SplineHazardModel:
    """A fitted or candidate log-hazard spline with optional covariate effects."""

    basis: SplineBasis
    a: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).ravel()
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        if self.a.size != self.basis.m:
            raise DomainError(f"expected {self.basis.m} spline coefficients, got {self.a.size}")

    @classmethod
    def from_vector(cls, basis, theta, n_covariates: int = 0) -> SplineHazardModel:
        basis = _as_basis(basis)
        theta = np.asarray(theta, dtype=float)
        return cls(basis, theta[: basis.m], theta[basis.m : basis.m + n_covariates])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.beta])

    @property
    def J(self) -> float:
        return self.basis.roughness(self.a)

    def log_hazard(self, u) -> np.ndarray:
        return self.basis.design(u) @ self.a

    def hazard(self, u) -> np.ndarray:
        return np.exp(self.log_hazard(u))


class HazardDesign:
    """Precomputed basis evaluations for the censored log-likelihood on one dataset.

    The cumulative hazard ``int_0^t exp(alpha(u)) du`` is integrated with a
    7-point Gauss-Legendre rule on every knot interval below ``t`` and on the
    partial interval that contains ``t``.
    """

    def __init__(self, basis: SplineBasis, data: Dataset, points: int = GAUSS_POINTS):
        t = data.times
        if np.any(t < basis.lower) or np.any(t > basis.upper * (1 + 1e-12)):
            raise DomainError(
                f"observation times must lie in the spline domain [{basis.lower}, {basis.upper}]"
            )
        self.basis = basis
        self.n = t.size
        self.q = data.n_covariates
        self.events = data.events.astype(float)
        self.z = data.covariates
        gx, gw = np.polynomial.legendre.leggauss(points)
        br = basis.breakpoints
        k_int = br.size - 1
        half = 0.5 * np.diff(br)
        mid = 0.5 * (br[1:] + br[:-1])
        xf = mid[:, None] + half[:, None] * gx[None, :]
        self.full_design = basis.design(xf.ravel())  # (k_int * points, m)
        self.full_weights = (half[:, None] * gw[None, :]).ravel()
        self.k_int = k_int
        self.points = points
        idx = np.clip(np.searchsorted(br, t, side="right") - 1, 0, k_int - 1)
        self.interval = idx
        left = br[idx]
        ph = 0.5 * (t - left)
        xp = (left + ph)[:, None] + ph[:, None] * gx[None, :]
        self.partial_design = basis.design(xp.ravel()).reshape(t.size, points, basis.m)
        self.partial_weights = ph[:, None] * gw[None, :]
        self.event_design = basis.design(t)

    def _split(self, theta):
        theta = np.asarray(theta, dtype=float)
        m = self.basis.m
        return theta[:m], theta[m : m + self.q]

    def loglik_batch(self, thetas: np.ndarray) -> np.ndarray:
        """Log-likelihood for each column of ``thetas`` (shape ``(m + q, k)``)."""
        m = self.basis.m
        A = thetas[:m]
        lin = self.z @ thetas[m : m + self.q]  # (n, k); zeros when q == 0
        haz_full = np.exp(self.full_design @ A) * self.full_weights[:, None]
        per_int = haz_full.reshape(self.k_int, self.points, -1).sum(axis=1)
        before = np.vstack([np.zeros((1, per_int.shape[1])), np.cumsum(per_int, axis=0)[:-1]])
        partial = np.einsum("ipm,mk->ipk", self.partial_design, A)
        cum = before[self.interval] + np.sum(np.exp(partial) * self.partial_weights[:, :, None], axis=1)
        log_h = self.event_design @ A + lin
        return np.sum(self.events[:, None] * log_h - np.exp(lin) * cum, axis=0)

    def loglik(self, theta) -> float:
        return float(self.loglik_batch(np.asarray(theta, dtype=float)[:, None])[0])

    def _cumhaz_parts(self, a):
        """Per-subject baseline cumulative hazard and its gradient in ``a``."""
        full = np.exp(self.full_design @ a) * self.full_weights
        per_int = full.reshape(self.k_int, self.points).sum(axis=1)
        per_int_grad = (self.full_design * full[:, None]).reshape(self.k_int, self.points, -1).sum(axis=1)
        zero = np.zeros((1, self.basis.m))
        before = np.concatenate([[0.0], np.cumsum(per_int)[:-1]])
        before_grad = np.vstack([zero, np.cumsum(per_int_grad, axis=0)[:-1]])
        pw = np.exp(self.partial_design @ a) * self.partial_weights
        cum = before[self.interval] + pw.sum(axis=1)
        cum_grad = before_grad[self.interval] + np.einsum("ipm,ip->im", self.partial_design, pw)
        return full, pw, cum, cum_grad

    def score(self, theta) -> np.ndarray:
        """Exact gradient of the (quadrature-discretized) log-likelihood."""
        a, beta = self._split(theta)
        _, _, cum, cum_grad = self._cumhaz_parts(a)
        c = np.exp(self.z @ beta)
        ga = self.events @ self.event_design - c @ cum_grad
        gb = self.z.T @ (self.events - c * cum)
        return np.concatenate([ga, gb])

    def hessian(self, theta) -> np.ndarray:
        """Exact Hessian of the discretized log-likelihood (negative semidefinite)."""
        a, beta = self._split(theta)
        full, pw, cum, cum_grad = self._cumhaz_parts(a)
        c = np.exp(self.z @ beta)
        # each full-interval node counts once for every subject whose time lies beyond it
        beyond = np.concatenate([[0.0], np.cumsum(np.bincount(self.interval, c, self.k_int))])
        at_risk = (beyond[-1] - beyond[1:])  # sum of c over subjects with interval index > k
        node_w = full * np.repeat(at_risk, self.points)
        haa = self.full_design.T @ (node_w[:, None] * self.full_design)
        haa += np.einsum("ipm,ip,ipl->ml", self.partial_design, pw * c[:, None], self.partial_design)
        hab = cum_grad.T @ (c[:, None] * self.z)
        hbb = self.z.T @ ((c * cum)[:, None] * self.z)
        return -np.block([[haa, hab], [hab.T, hbb]])

    def numeric_gradient(self, theta, penalty: float = 0.0) -> np.ndarray:
        """Central-difference gradient of ``loglik - penalty * J`` (all columns in one batch)."""
        theta = np.asarray(theta, dtype=float)
        p = theta.size
        h = 1e-5 * np.maximum(1.0, np.abs(theta))
        cols = np.repeat(theta[:, None], 2 * p, axis=1)
        cols[np.arange(p), np.arange(p)] += h
        cols[np.arange(p), p + np.arange(p)] -= h
        vals = self.loglik_batch(cols)
        if penalty:
            A = cols[: self.basis.m]
            R = self.basis.penalty_factor @ A
            vals = vals - penalty * np.einsum("ik,ik->k", R, R)
        step = cols[np.arange(p), np.arange(p)] - cols[np.arange(p), p + np.arange(p)]
        return (vals[:p] - vals[p:]) / step

    def penalty_gradient(self, theta) -> np.ndarray:
        a, beta = self._split(theta)
        return np.concatenate([2 * self.basis.omega @ a, np.zeros(beta.size)])

    def penalty_hessian(self) -> np.ndarray:
        p = self.basis.m + self.q
        out = np.zeros((p, p))
        out[: self.basis.m, : self.basis.m] = 2 * self.basis.omega
        return out


def spline_loglik(model: SplineHazardModel, data: Dataset) -> float:
    """Censored-data log-likelihood of the spline hazard model."""
    return HazardDesign(model.basis, data).loglik(model.vector)


def penalized_loglik(model: SplineHazardModel, data: Dataset, kappa: float) -> float:
    """``loglik - kappa * a' Omega a``."""
    if not kappa >= 0:
        raise DomainError(f"kappa must be nonnegative, got {kappa!r}")
    ll = spline_loglik(model, data)
    return ll - kappa * model.J if kappa else ll


def _start(basis: SplineBasis, data: Dataset) -> np.ndarray:
    if data.n_events == 0:
        raise DegenerateError("no events in the data")
    rate = data.n_events / float(np.sum(data.times))
    return np.concatenate([np.full(basis.m, math.log(rate)), np.zeros(data.n_covariates)])


def _fit(design: HazardDesign, kappa: float, theta0, tol: float) -> tuple[FitResult, float]:
    basis = design.basis
    m = basis.m

    def objective(theta):
        return design.loglik(theta) - (kappa * basis.roughness(theta[:m]) if kappa else 0.0)

    def gradient(theta):
        return design.score(theta) - kappa * design.penalty_gradient(theta)

    theta0 = np.asarray(theta0, dtype=float)
    curvature = -design.hessian(theta0) + kappa * design.penalty_hessian()
    try:
        h0 = np.linalg.inv(curvature + 1e-10 * np.eye(theta0.size) * np.trace(curvature))
    except np.linalg.LinAlgError:
        h0 = None
    fit = maximize(objective, theta0, tol=tol, gradient=gradient, inv_hessian0=h0)
    fit.n_obs = design.n
    return fit, basis.roughness(fit.theta_hat[:m])


def fit_penalized(data: Dataset, knots, kappa: float, theta0=None, tol: float = 1e-8) -> tuple[FitResult, float]:
    """Maximum penalized likelihood fit; returns ``(fit, J(theta_hat))``.

    ``fit.theta_hat`` stacks the spline coefficients and the covariate
    coefficients (unpenalized).
    """
    if not kappa >= 0:
        raise DomainError(f"kappa must be nonnegative, got {kappa!r}")
    basis = _as_basis(knots)
    design = HazardDesign(basis, data)
    theta0 = _start(basis, data) if theta0 is None else np.asarray(theta0, dtype=float)
    return _fit(design, kappa, theta0, tol)


def fit_affine(data: Dataset, knots, tol: float = 1e-8) -> FitResult:
    """Best fit with an affine log-hazard (the null space of the penalty)."""
    basis = _as_basis(knots)
    design = HazardDesign(basis, data)
    g = basis.greville()
    m = basis.m
    start = _start(basis, data)

    def expand(c):
        return np.concatenate([c[0] + c[1] * g, c[2:]])

    lift = np.zeros((m + design.q, 2 + design.q))
    lift[:m, 0] = 1.0
    lift[:m, 1] = g
    lift[m:, 2:] = np.eye(design.q)

    def objective(c):
        return design.loglik(expand(c))

    def gradient(c):
        return lift.T @ design.score(expand(c))

    c0 = np.concatenate([[start[0], 0.0], start[m:]])
    fit = maximize(objective, c0, tol=tol, gradient=gradient, p=2 + design.q)
    fit.theta_hat = expand(fit.theta_hat)
    return fit


class SieveFit(NamedTuple):
    fit: FitResult
    kappa_nu: float
    lam: float


class _WarmFitter:
    """Penalized fits that start from the closest previously solved weight."""

    def __init__(self, design: HazardDesign, theta0, tol):
        self.design = design
        self.tol = tol
        self.solved: dict[float, FitResult] = {}
        self.theta0 = theta0

    def __call__(self, kappa: float) -> tuple[FitResult, float]:
        if self.solved:
            near = min(self.solved, key=lambda k: abs(math.log(k) - math.log(kappa)))
            start = self.solved[near].theta_hat
        else:
            start = self.theta0
        fit, j = _fit(self.design, kappa, start, self.tol)
        self.solved[kappa] = fit
        return fit, j


def fit_sieve(data: Dataset, knots, nu: float, tol: float = 1e-8) -> SieveFit:
    """Maximum likelihood under ``J(theta) <= nu``.

    Returns ``(fit, kappa_nu, lam)``. When the unpenalized fit already
    satisfies the constraint the multiplier is 0. Otherwise the penalty weight
    ``kappa_nu`` with ``J = nu`` is located by bisection and the multiplier
    equals it. For ``nu = 0`` the feasible set is the affine null space, no
    finite multiplier exists, and ``kappa_nu = lam = inf``.
    """
    if not nu >= 0 or not math.isfinite(nu):
        raise DomainError(f"nu must be a nonnegative finite number, got {nu!r}")
    basis = _as_basis(knots)
    design = HazardDesign(basis, data)
    fit0, j0 = _fit(design, 0.0, _start(basis, data), tol)
    if j0 <= nu:
        return SieveFit(fit0, 0.0, 0.0)
    if nu == 0:
        return SieveFit(fit_affine(data, basis, tol), math.inf, math.inf)

    fitter = _WarmFitter(design, fit0.theta_hat, tol)
    fitter.solved[1e-300] = fit0  # the unpenalized fit seeds warm starts
    kappa = 1.0
    _, j = fitter(kappa)
    if j > nu:
        while j > nu:
            if kappa >= 1e8:
                raise RangeError(f"J stays above nu={nu:g} for every kappa up to 1e8")
            lo, kappa = kappa, kappa * 10
            _, j = fitter(kappa)
        hi = kappa
    else:
        while j <= nu:
            if kappa <= 1e-8:
                raise RangeError(f"J stays below nu={nu:g} for every kappa down to 1e-8")
            hi, kappa = kappa, kappa / 10
            _, j = fitter(kappa)
        lo = kappa
    kappa_nu, fit = match_constraint(fitter, nu, (lo, hi), tol=SIEVE_TOL)
    return SieveFit(fit, kappa_nu, kappa_nu)


class KKTResidual(NamedTuple):
    grad_residual: float
    primal_feasibility: float
    dual_feasibility: bool
    complementarity: float


def kkt_residual(model: SplineHazardModel, lam: float, nu: float, data: Dataset) -> KKTResidual:
    """Karush-Kuhn-Tucker diagnostics for the constrained problem at ``model``.

    ``grad_residual = ||grad loglik - lam grad J||_inf`` with the exact
    gradient of the (quadrature-discretized) loglik and ``grad J = 2 Omega a``.
    """
    design = HazardDesign(model.basis, data)
    theta = model.vector
    g = design.score(theta)
    gj = design.penalty_gradient(theta)
    j = model.J
    if math.isinf(lam):
        # nu = 0 case: only directions outside the penalty null space carry the multiplier
        resid = math.nan
    else:
        resid = float(np.max(np.abs(g - lam * gj)))
    comp = 0.0 if lam == 0 else abs(lam * (j - nu))
    return KKTResidual(resid, max(0.0, j - nu), bool(lam >= 0), comp)


# -- simulation ------------------------------------------------------------------


def simulate_survival(hazard, n: int, seed: int, censor_time: float, covariates=None, beta=None, grid: int = 20_001) -> Dataset:
    """Draw right-censored event times for a hazard given as a vectorized callable.

    Times solve ``H(t) = E`` with ``E ~ Exp(1)`` (PCG64 with ``seed``); ``H``
    is tabulated by cumulative Simpson integration on ``grid`` points up to
    ``censor_time``. Subjects still event-free at ``censor_time`` are censored.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    e = rng.standard_exponential(n)
    if covariates is not None:
        z = np.asarray(covariates, dtype=float).reshape(n, -1)
        e = e * np.exp(-(z @ np.asarray(beta, dtype=float)))
    u = np.linspace(0.0, censor_time, grid)
    cum = integrate.cumulative_simpson(np.asarray(hazard(u), dtype=float), x=u, initial=0.0)
    event = e <= cum[-1]
    times = np.where(event, np.interp(np.minimum(e, cum[-1]), cum, u), censor_time)
    return Dataset.from_arrays(times, event, None if covariates is None else z)


def bathtub_hazard(u):
    """Test hazard: high early risk, a trough, then rising late risk."""
    u = np.asarray(u, dtype=float)
    return 1.5 * np.exp(-2.0 * u) + 0.05 * u * u
