"""Model choice from estimated Kullback-Leibler risk.

* ``model_scores``: AIC and the matching per-observation risk estimate
  ``(-L + p) / n``; ``aic == 2 n * ekl_estimate``.
* ``risk_difference``: ``D = (AIC_a - AIC_b) / (2n)``, an estimate of the
  difference of expected divergences of two fitted models. ``D > 0`` favours
  model ``b``.
* ``lcv_select``: k-fold likelihood cross-validation for the spline penalty.
* ``simulate_ekl``: Monte Carlo expected divergence of a fitted model and its
  split into misspecification and statistical parts.
* ``map_estimate``: binomial posterior modes under flat and Jeffreys priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .divergence import kl, misspecification_risk
from .errors import BoundaryError, DomainError, FoldError, KLRiskError, NumericalError, UnconvergedError
from .families import ParametricFamily, TrueModel, sample
from .likelihood import fit_mle, score_and_information
from .optim import FitResult
from .penalized import HazardDesign, _as_basis, _start, fit_penalized

MAX_FAILURE_RATE = 0.01


def model_scores(fit: FitResult, n: int) -> tuple[float, float]:
    """``(aic, ekl_estimate)`` for a converged fit on ``n`` observations.

    >>> from klrisk.optim import FitResult
    >>> model_scores(FitResult(np.zeros(2), -10.0, 0.0, 1, True, 2), 50)
    (24.0, 0.24)
    """
    if int(n) != n or n < 1:
        raise DomainError(f"sample size must be a positive integer, got {n!r}")
    if not fit.converged:
        raise UnconvergedError(
            f"refusing to score an unconverged fit (gradient norm {fit.grad_norm:.3g} after {fit.iterations} iterations)"
        )
    if fit.n_obs is not None and fit.n_obs != n:
        raise DomainError(f"fit was computed on {fit.n_obs} observations, not {n}")
    ll = float(fit.loglik_at_max)
    aic = -2.0 * ll + 2.0 * fit.p
    return aic, (-ll + fit.p) / n


def risk_difference(fit_a: FitResult, fit_b: FitResult, n: int) -> float:
    """``D = (AIC_a - AIC_b) / (2n)``; positive values favour ``fit_b``."""
    if fit_a.n_obs is not None and fit_b.n_obs is not None and fit_a.n_obs != fit_b.n_obs:
        raise DomainError(f"fits use different samples ({fit_a.n_obs} vs {fit_b.n_obs} observations)")
    aic_a, _ = model_scores(fit_a, n)
    aic_b, _ = model_scores(fit_b, n)
    return (aic_a - aic_b) / (2.0 * n)


# -- likelihood cross-validation -----------------------------------------------


def stratified_folds(events, folds: int, seed: int) -> np.ndarray:
    """Fold label per observation, balanced separately over events and censorings."""
    events = np.asarray(events, dtype=bool)
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = np.empty(events.size, dtype=int)
    offset = 0
    for mask in (events, ~events):
        idx = np.flatnonzero(mask)
        perm = rng.permutation(idx)
        labels[perm] = (np.arange(perm.size) + offset) % folds
        offset += perm.size
    return labels


@dataclass
class LCVResult:
    kappa_star: float
    kappa_grid: np.ndarray
    cv_scores: np.ndarray
    folds: np.ndarray = field(repr=False)


def lcv_select(data: Dataset, knots, kappa_grid, folds: int = 5, seed: int = 0, tol: float = 1e-8) -> LCVResult:
    """Choose the penalty weight by k-fold likelihood cross-validation.

    The score of ``kappa`` is the held-out log-likelihood summed over folds
    and divided by ``n`` (the fold fits use the same spline basis as the full
    data). The largest maximizer wins ties, favouring smoother fits.
    """
    grid = np.asarray(kappa_grid, dtype=float).ravel()
    if grid.size == 0:
        raise DomainError("empty kappa grid")
    if np.any(~np.isfinite(grid)) or np.any(grid < 0):
        raise DomainError("kappa grid values must be nonnegative and finite")
    n = data.n
    if int(folds) != folds or not 2 <= folds <= n:
        raise DomainError(f"folds must be an integer between 2 and n={n}, got {folds!r}")
    basis = _as_basis(knots)
    labels = stratified_folds(data.events, int(folds), seed)
    order = np.argsort(grid, kind="stable")
    scores = np.zeros(grid.size)
    for f in range(int(folds)):
        train = data.subset(np.flatnonzero(labels != f))
        test = data.subset(np.flatnonzero(labels == f))
        if train.n_events == 0:
            raise FoldError(f"training set for fold {f} has no events; use fewer folds")
        held_out = HazardDesign(basis, test)
        theta = _start(basis, train)
        for j in order:
            fit, _ = fit_penalized(train, basis, float(grid[j]), theta0=theta, tol=tol)
            theta = fit.theta_hat
            scores[j] += held_out.loglik(theta)
    scores /= n
    best = np.flatnonzero(scores == scores.max())
    kappa_star = float(grid[best[np.argmax(grid[best])]])
    return LCVResult(kappa_star, grid, scores, labels)


# -- expected divergence by simulation -----------------------------------------


@dataclass
class EKLResult:
    """Monte Carlo expected divergence of an MLE-fitted model from the truth."""

    mean_ekl: float
    misspec_component: float
    statistical_component: float
    mean_trace: float
    reps: int
    failures: int
    kl_values: np.ndarray = field(repr=False)
    traces: np.ndarray = field(repr=False)

    @property
    def standard_error(self) -> float:
        return float(np.std(self.kl_values, ddof=1) / math.sqrt(self.kl_values.size))


def simulate_ekl(
    truth: TrueModel,
    fitted_family: ParametricFamily,
    n: int,
    reps: int,
    C: float | None = None,
    seed: int = 0,
    traces: bool = True,
) -> EKLResult:
    """Average divergence of the fitted law over ``reps`` fresh samples of size ``n``.

    Replicate ``r`` draws its sample with seed ``seed + r``. The
    misspecification part is the minimum divergence attainable within
    ``fitted_family``; the remainder is the statistical part. With
    ``traces=True`` each replicate also records ``Tr(I^-1 J)`` at its MLE.
    """
    if int(reps) != reps or reps < 100:
        raise DomainError(f"at least 100 replicates are required, got {reps!r}")
    if int(n) != n or n < 2:
        raise DomainError(f"sample size must be an integer >= 2, got {n!r}")
    ft, tt = truth.family, truth.theta
    values, trs = [], []
    failures = 0
    for r in range(int(reps)):
        x = sample(ft, tt, int(n), seed + r)
        data = Dataset.censor_at(x, C) if C is not None else Dataset.from_arrays(x)
        try:
            fit = fit_mle(fitted_family, data)
            if not fit.converged:
                raise UnconvergedError("MLE did not converge")
            values.append(kl((fitted_family, fit.theta_hat), (ft, tt), C))
            if traces:
                _, info = score_and_information(fitted_family, fit.theta_hat, data)
                trs.append(info.trace_ratio())
        except (KLRiskError, np.linalg.LinAlgError):
            failures += 1
    if failures > MAX_FAILURE_RATE * reps:
        raise NumericalError(
            f"{failures} of {reps} replicate fits failed (more than {MAX_FAILURE_RATE:.0%})",
            {"failures": failures, "reps": int(reps)},
        )
    values = np.array(values)
    trs = np.array(trs)
    mean_ekl = float(values.mean())
    misspec = misspecification_risk(fitted_family, truth, C).risk
    return EKLResult(
        mean_ekl=mean_ekl,
        misspec_component=misspec,
        statistical_component=mean_ekl - misspec,
        mean_trace=float(trs.mean()) if trs.size else math.nan,
        reps=int(reps),
        failures=failures,
        kl_values=values,
        traces=trs,
    )


# -- posterior modes -------------------------------------------------------------


def map_estimate(k: int, n: int, prior: str = "flat") -> float:
    """Posterior mode of a binomial probability.

    With a flat prior on ``p`` the mode is the MLE ``k / n``. Jeffreys' prior
    ``p^(-1/2) (1 - p)^(-1/2)`` tilts the log-posterior to
    ``(k - 1/2) log p + (n - k - 1/2) log(1 - p)``, whose maximizer is
    ``(k - 1/2) / (n - 1)``; for ``k`` in ``{0, n}`` the density is unbounded
    at the edge and no interior mode exists.

    >>> map_estimate(6, 10), round(map_estimate(6, 10, "jeffreys"), 6)
    (0.6, 0.611111)
    """
    if int(k) != k or int(n) != n:
        raise DomainError("k and n must be integers")
    k, n = int(k), int(n)
    if n < 1 or not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    if prior == "flat":
        return k / n
    if prior == "jeffreys":
        if k in (0, n):
            raise BoundaryError(f"Jeffreys posterior mode lies on the boundary for k={k}, n={n}")
        return (k - 0.5) / (n - 1)
    raise DomainError(f"unknown prior {prior!r}; expected 'flat' or 'jeffreys'")
