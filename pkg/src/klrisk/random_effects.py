"""Random-intercept models shared by the marginal and hierarchical likelihoods.

Two conditional laws are supported, both with ``b_i ~ N(0, tau^2)``:

* ``normal-normal``: ``y_ij = mu + b_i + e_ij``, ``e_ij ~ N(0, sigma2)``;
  ``sigma2`` is either fixed on the model or estimated (then ``theta = (mu, sigma2)``).
* ``poisson-lognormal``: ``y_ij | b_i ~ Poisson(exp(mu + b_i))``; ``theta = (mu,)``.

Here ``tau`` is the standard deviation of the random intercept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import GroupedDataset
from .errors import DomainError, NumericalError

KINDS = ("normal-normal", "poisson-lognormal")


@dataclass(frozen=True)
class SubjectStats:
    """Per-subject sufficient statistics."""

    size: np.ndarray
    mean: np.ndarray
    within_ss: np.ndarray
    total: np.ndarray
    lgamma_sum: np.ndarray

    @classmethod
    def from_data(cls, data: GroupedDataset) -> SubjectStats:
        ys = data.outcomes
        size = np.array([y.size for y in ys], dtype=float)
        mean = np.array([y.mean() for y in ys])
        within = np.array([np.sum((y - y.mean()) ** 2) for y in ys])
        total = np.array([y.sum() for y in ys])
        lg = np.array([special.gammaln(y + 1).sum() for y in ys])
        return cls(size, mean, within, total, lg)


@dataclass(frozen=True)
class RandomEffectsModel:
    kind: str
    sigma2: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown random-effects model {self.kind!r}; expected one of {KINDS}")
        if self.sigma2 is not None:
            if self.kind != "normal-normal":
                raise DomainError("a fixed sigma2 only applies to the normal-normal model")
            if not self.sigma2 > 0:
                raise DomainError("sigma2 must be positive")

    @property
    def theta_names(self) -> tuple[str, ...]:
        if self.kind == "normal-normal" and self.sigma2 is None:
            return ("mu", "sigma2")
        return ("mu",)

    @property
    def theta_dim(self) -> int:
        return len(self.theta_names)

    def validate(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if th.shape != (self.theta_dim,) or not np.all(np.isfinite(th)):
            raise DomainError(f"{self.kind} expects theta {self.theta_names}, got {th.tolist()}")
        if self.theta_dim == 2 and th[1] <= 0:
            raise DomainError("sigma2 must be positive")
        return th

    def to_unconstrained(self, theta) -> np.ndarray:
        th = self.validate(theta).copy()
        if self.theta_dim == 2:
            th[1] = math.log(th[1])
        return th

    def from_unconstrained(self, eta) -> np.ndarray:
        th = np.array(eta, dtype=float)
        if self.theta_dim == 2:
            th[1] = math.exp(th[1])
        return th

    def stats(self, data: GroupedDataset) -> SubjectStats:
        """Sufficient statistics of ``data``, after checking the outcomes suit the model."""
        if self.kind == "poisson-lognormal":
            for y in data.outcomes:
                if np.any(y < 0) or np.any(y != np.round(y)):
                    raise DomainError("poisson-lognormal outcomes must be nonnegative integers")
        return SubjectStats.from_data(data)

    def residual_variance(self, theta) -> float:
        return float(theta[1]) if self.theta_dim == 2 else float(self.sigma2)

    def conditional_loglik(self, theta, b, stats: SubjectStats) -> np.ndarray:
        """Per-subject ``sum_j log f(y_ij | b_i)``.

        ``b`` may carry extra trailing axes (e.g. quadrature nodes); the
        result then has shape ``b.shape``.
        """
        th = self.validate(theta)
        b = np.asarray(b, dtype=float)
        extra = (slice(None),) + (None,) * (b.ndim - 1)
        n = stats.size[extra]
        eta = th[0] + b
        if self.kind == "normal-normal":
            s2 = self.residual_variance(th)
            dev = stats.mean[extra] - eta
            return -0.5 * n * math.log(2 * math.pi * s2) - (stats.within_ss[extra] + n * dev * dev) / (2 * s2)
        return stats.total[extra] * eta - n * np.exp(eta) - stats.lgamma_sum[extra]

    def random_effect_logpdf(self, b, tau: float):
        if not tau > 0:
            raise DomainError(f"tau must be positive, got {tau!r}")
        b = np.asarray(b, dtype=float)
        return -0.5 * math.log(2 * math.pi * tau * tau) - b * b / (2 * tau * tau)

    def conditional_score(self, theta, b, stats: SubjectStats) -> tuple[np.ndarray, np.ndarray]:
        """Derivatives of the per-subject conditional log-likelihood.

        Returns ``(d/dtheta, d/db)`` with shapes ``b.shape + (theta_dim,)`` and
        ``b.shape``; ``theta`` derivatives are on the natural scale.
        """
        th = self.validate(theta)
        b = np.asarray(b, dtype=float)
        extra = (slice(None),) + (None,) * (b.ndim - 1)
        n = stats.size[extra]
        eta = th[0] + b
        if self.kind == "normal-normal":
            s2 = self.residual_variance(th)
            dev = stats.mean[extra] - eta
            db = n * dev / s2
            if self.theta_dim == 2:
                ds2 = -0.5 * n / s2 + (stats.within_ss[extra] + n * dev * dev) / (2 * s2 * s2)
                return np.stack([db, ds2], axis=-1), db
            return db[..., None], db
        db = stats.total[extra] - n * np.exp(eta)
        return db[..., None], db

    def conditional_curvature(self, theta, b, stats: SubjectStats) -> np.ndarray:
        """Second derivative in ``b`` of the per-subject conditional log-likelihood."""
        th = self.validate(theta)
        b = np.asarray(b, dtype=float)
        if self.kind == "normal-normal":
            return np.broadcast_to(-stats.size / self.residual_variance(th), b.shape).copy()
        return -stats.size * np.exp(th[0] + b)

    def posterior_mode(self, theta, tau: float, stats: SubjectStats, b0=None) -> np.ndarray:
        """Per-subject maximizer of ``log f(y_i | b) + log phi(b; tau^2)``.

        Closed form (BLUP shrinkage) for the normal-normal model; otherwise a
        vectorized Newton iteration with step halving. Each subject's problem
        is strictly concave, so the maximizer is unique.
        """
        th = self.validate(theta)
        if not tau > 0:
            raise DomainError(f"tau must be positive, got {tau!r}")
        prec = 1.0 / (tau * tau)
        if self.kind == "normal-normal":
            s2 = self.residual_variance(th)
            return (stats.size * (stats.mean - th[0]) / s2) / (stats.size / s2 + prec)
        b = np.zeros_like(stats.size) if b0 is None else np.array(b0, dtype=float)

        def obj(bb):
            return self.conditional_loglik(th, bb, stats) - 0.5 * prec * bb * bb

        scale = max(1.0, float(np.max(stats.total)))
        for _ in range(200):
            _, d_b = self.conditional_score(th, b, stats)
            g = d_b - prec * b
            if np.max(np.abs(g)) < 1e-13 * scale:
                return b
            step = g / (prec - self.conditional_curvature(th, b, stats))
            cur = obj(b)
            t = np.ones_like(b)
            for _ in range(60):
                bad = ~(obj(b + t * step) >= cur - 1e-13 * np.abs(cur))
                if not bad.any():
                    break
                t = np.where(bad, 0.5 * t, t)
            b = b + t * step
        _, d_b = self.conditional_score(th, b, stats)
        if np.max(np.abs(d_b - prec * b)) > 1e-8 * scale:
            raise NumericalError("random-effect Newton iterations did not converge")
        return b
