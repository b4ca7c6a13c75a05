"""Parametric families: densities, survival functions, samplers, closed-form MLEs.

Four laws are supported::

    exponential   theta = (rate,)             support [0, inf)
    weibull       theta = (shape, scale)      support [0, inf)
    normal        theta = (mean, variance)    support R
    binomial      theta = (prob,)             support {0, ..., trials}

Samplers draw uniforms from ``numpy.random.Generator(PCG64(seed))`` and push
them through the inverse CDF, so a given ``(family, theta, n, seed)`` always
yields the same floating-point sequence.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import optimize, special

from .errors import DegenerateError, DomainError, UnsupportedError

if TYPE_CHECKING:
    from .data import Dataset

FAMILY_NAMES = ("exponential", "weibull", "normal", "binomial")

_PARAM_NAMES = {
    "exponential": ("rate",),
    "weibull": ("shape", "scale"),
    "normal": ("mean", "variance"),
    "binomial": ("prob",),
}


@dataclass(frozen=True)
class ParametricFamily:
    """A named distribution family with parameters in an open box.

    Parameters
    ----------
    name : str
        One of ``exponential``, ``weibull``, ``normal``, ``binomial``.
    trials : int, optional
        Number of trials; required for (and only meaningful to) the binomial.
    """

    name: str
    trials: int | None = None

    def __post_init__(self):
        if self.name not in FAMILY_NAMES:
            raise DomainError(
                f"unknown family {self.name!r}; expected one of {', '.join(FAMILY_NAMES)}"
            )
        if self.name == "binomial":
            if self.trials is None or int(self.trials) != self.trials or self.trials < 1:
                raise DomainError("binomial family needs a positive integer trial count")
        elif self.trials is not None:
            raise DomainError(f"{self.name} family takes no trial count")

    @property
    def param_dim(self) -> int:
        return len(_PARAM_NAMES[self.name])

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self.name]

    @property
    def is_time_to_event(self) -> bool:
        return self.name in ("exponential", "weibull")

    @property
    def is_discrete(self) -> bool:
        return self.name == "binomial"

    def __str__(self):
        if self.name == "binomial":
            return f"binomial({self.trials})"
        return self.name

    # -- parameter handling -------------------------------------------------

    def validate(self, theta) -> np.ndarray:
        """Return ``theta`` as a float array, raising if it leaves the box."""
        arr = np.atleast_1d(np.asarray(theta, dtype=float))
        if arr.ndim != 1 or arr.size != self.param_dim:
            raise DomainError(
                f"{self} expects {self.param_dim} parameter(s), got {arr.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"non-finite parameter for {self}: {arr.tolist()}")
        if self.name == "normal":
            ok = arr[1] > 0
        elif self.name == "binomial":
            ok = 0.0 < arr[0] < 1.0
        else:
            ok = bool(np.all(arr > 0))
        if not ok:
            raise DomainError(f"parameter {arr.tolist()} outside the domain of {self}")
        return arr

    def is_valid(self, theta) -> bool:
        try:
            self.validate(theta)
        except DomainError:
            return False
        return True

    def boundary_distance(self, theta) -> np.ndarray:
        """Distance of each coordinate from the edge of its interval (``inf`` if unbounded)."""
        th = self.validate(theta)
        if self.name == "normal":
            return np.array([math.inf, th[1]])
        if self.name == "binomial":
            return np.array([min(th[0], 1.0 - th[0])])
        return th.copy()

    def to_unconstrained(self, theta) -> np.ndarray:
        """Map ``theta`` to R^p (log for positive parameters, logit for probabilities)."""
        th = self.validate(theta)
        if self.name == "normal":
            return np.array([th[0], math.log(th[1])])
        if self.name == "binomial":
            return np.array([special.logit(th[0])])
        return np.log(th)

    def from_unconstrained(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if self.name == "normal":
            return np.array([eta[0], math.exp(eta[1])])
        if self.name == "binomial":
            return np.array([special.expit(eta[0])])
        return np.exp(eta)

    # -- distribution functions (vectorized over x, no support checks) ------

    def logpdf(self, theta, x):
        th = self.validate(theta)
        x = np.asarray(x, dtype=float)
        if self.name == "exponential":
            return math.log(th[0]) - th[0] * x
        if self.name == "weibull":
            k, s = th
            z = x / s
            with np.errstate(divide="ignore"):
                return math.log(k / s) + special.xlogy(k - 1.0, z) - z**k
        if self.name == "normal":
            mu, var = th
            return -0.5 * math.log(2 * math.pi * var) - 0.5 * (x - mu) ** 2 / var
        p = th[0]
        n = self.trials
        return (
            special.gammaln(n + 1)
            - special.gammaln(x + 1)
            - special.gammaln(n - x + 1)
            + special.xlogy(x, p)
            + special.xlog1py(n - x, -p)
        )

    def logsf(self, theta, x):
        """Log of P(X > x)."""
        th = self.validate(theta)
        x = np.asarray(x, dtype=float)
        if self.name == "exponential":
            return -th[0] * x
        if self.name == "weibull":
            return -((x / th[1]) ** th[0])
        if self.name == "normal":
            return special.log_ndtr(-(x - th[0]) / math.sqrt(th[1]))
        with np.errstate(divide="ignore"):
            return np.log(self.sf(th, x))

    def sf(self, theta, x):
        th = self.validate(theta)
        if self.name == "binomial":
            x = np.floor(np.asarray(x, dtype=float))
            cdf = np.where(x < 0, 0.0, special.bdtr(np.clip(x, 0, self.trials), self.trials, th[0]))
            return np.where(x >= self.trials, 0.0, 1.0 - cdf)
        return np.exp(self.logsf(th, x))

    def cdf(self, theta, x):
        th = self.validate(theta)
        if self.name == "normal":
            return special.ndtr((np.asarray(x, dtype=float) - th[0]) / math.sqrt(th[1]))
        if self.is_time_to_event:
            return -np.expm1(self.logsf(th, x))
        return 1.0 - self.sf(th, x)

    def ppf(self, theta, u):
        """Inverse CDF (smallest support point with CDF >= u for the binomial)."""
        th = self.validate(theta)
        u = np.asarray(u, dtype=float)
        if self.name == "exponential":
            return -np.log1p(-u) / th[0]
        if self.name == "weibull":
            return th[1] * (-np.log1p(-u)) ** (1.0 / th[0])
        if self.name == "normal":
            return th[0] + math.sqrt(th[1]) * special.ndtri(u)
        support = np.arange(self.trials + 1)
        table = special.bdtr(support, self.trials, th[0])
        table[-1] = 1.0
        return support[np.searchsorted(table, u, side="left")].astype(float)

    def isf(self, theta, q):
        """Inverse survival function, accurate for ``q`` close to 0."""
        th = self.validate(theta)
        q = np.asarray(q, dtype=float)
        if self.name == "exponential":
            return -np.log(q) / th[0]
        if self.name == "weibull":
            return th[1] * (-np.log(q)) ** (1.0 / th[0])
        if self.name == "normal":
            return th[0] - math.sqrt(th[1]) * special.ndtri(q)
        return self.ppf(th, 1.0 - q)

    def mean(self, theta) -> float:
        th = self.validate(theta)
        if self.name == "exponential":
            return 1.0 / th[0]
        if self.name == "weibull":
            return th[1] * math.gamma(1.0 + 1.0 / th[0])
        if self.name == "normal":
            return float(th[0])
        return self.trials * float(th[0])

    def support_bounds(self) -> tuple[float, float]:
        if self.name == "normal":
            return (-math.inf, math.inf)
        if self.name == "binomial":
            return (0.0, float(self.trials))
        return (0.0, math.inf)

    def in_support(self, x) -> bool:
        if not math.isfinite(x):
            return False
        if self.name == "normal":
            return True
        if self.name == "binomial":
            return x == int(x) and 0 <= x <= self.trials
        return x >= 0


@dataclass(frozen=True)
class TrueModel:
    """Simulation ground truth: a family together with its true parameter."""

    family: ParametricFamily
    theta_star: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "theta_star", tuple(self.family.validate(self.theta_star).tolist())
        )

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.theta_star)


def evaluate(family: ParametricFamily, theta, x: float) -> tuple[float, float]:
    """Return ``(log_density, survival)`` of ``family`` at a single point ``x``.

    ``survival`` is ``P(X > x)``. Raises ``DomainError`` for an invalid
    parameter or a point outside the support.

    >>> evaluate(ParametricFamily("exponential"), [1.0], 1.0)
    (-1.0, 0.36787944117144233)
    """
    th = family.validate(theta)
    x = float(x)
    if not family.in_support(x):
        raise DomainError(f"x={x!r} outside the support of {family}")
    return float(family.logpdf(th, x)), float(family.sf(th, x))


def sample(family: ParametricFamily, theta, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` variates by inverse-CDF transform of PCG64 uniforms."""
    th = family.validate(theta)
    if int(n) != n or n < 1:
        raise DomainError(f"sample size must be a positive integer, got {n!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return family.ppf(th, rng.random(int(n)))


def analytic_mle(family: ParametricFamily, data: Dataset) -> np.ndarray:
    """Closed-form maximum likelihood estimate.

    Supported: exponential with exact and/or right-censored times (events
    over total follow-up), normal and binomial with exact data only.
    """
    times = data.times
    events = data.events
    if family.name == "exponential":
        d = int(events.sum())
        if d == 0:
            raise DegenerateError("no events: the exponential MLE is at the boundary rate 0")
        return np.array([d / float(times.sum())])
    if not events.all():
        raise UnsupportedError(f"no closed-form MLE for {family} with censored data")
    if family.name == "normal":
        mu = float(times.mean())
        var = float(np.mean((times - mu) ** 2))
        if var <= 0:
            raise DegenerateError("zero sample variance")
        return np.array([mu, var])
    if family.name == "binomial":
        p = float(times.sum()) / (family.trials * times.size)
        if p <= 0.0 or p >= 1.0:
            raise DegenerateError(f"binomial MLE {p} lies on the boundary")
        return np.array([p])
    raise UnsupportedError(f"no closed-form MLE for {family}")


def moment_estimate(family: ParametricFamily, x) -> np.ndarray:
    """Method-of-moments estimate from raw draws; used only for starting values."""
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    v = float(x.var())
    if family.name == "exponential":
        return np.array([1.0 / m])
    if family.name == "normal":
        return np.array([m, max(v, 1e-12)])
    if family.name == "binomial":
        p = min(max(m / family.trials, 1e-6), 1 - 1e-6)
        return np.array([p])
    cv2 = v / (m * m)

    def excess(k):
        return math.exp(special.gammaln(1 + 2 / k) - 2 * special.gammaln(1 + 1 / k)) - 1 - cv2

    lo, hi = 0.1, 50.0
    if excess(lo) * excess(hi) > 0:
        k = lo if excess(lo) < 0 else hi
    else:
        k = optimize.brentq(excess, lo, hi, xtol=1e-10)
    return np.array([k, m / math.gamma(1 + 1 / k)])


_SPEC_RE = re.compile(r"^\s*([a-z]+)\s*(?:\(\s*(\d+)\s*\))?\s*:\s*(.+?)\s*$")


def parse_family_spec(spec: str) -> tuple[ParametricFamily, np.ndarray]:
    """Parse ``name:p1[,p2]`` (binomial: ``binomial(N):p``) into family and theta.

    >>> fam, th = parse_family_spec("weibull:2.0,1.0")
    >>> fam.name, th.tolist()
    ('weibull', [2.0, 1.0])
    """
    m = _SPEC_RE.match(spec)
    if m is None:
        raise DomainError(f"malformed family spec {spec!r}; expected name:p1[,p2]")
    name, trials, params = m.groups()
    family = ParametricFamily(name, int(trials) if trials else None)
    try:
        theta = [float(tok) for tok in params.split(",")]
    except ValueError:
        raise DomainError(f"non-numeric parameter in family spec {spec!r}") from None
    return family, family.validate(theta)


def parse_family_name(name: str) -> ParametricFamily:
    """Parse a bare family name such as ``weibull`` or ``binomial(10)``."""
    m = re.match(r"^\s*([a-z]+)\s*(?:\(\s*(\d+)\s*\))?\s*$", name)
    if m is None:
        raise DomainError(f"malformed family name {name!r}")
    return ParametricFamily(m.group(1), int(m.group(2)) if m.group(2) else None)
