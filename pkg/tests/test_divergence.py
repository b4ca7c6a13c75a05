import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klrisk.data import Dataset
from klrisk.divergence import (
    DivergenceUndefinedError,
    kl,
    kl_censored,
    kl_full,
    kl_oracle,
    misspecification_risk,
)
from klrisk.errors import DomainError, UnsupportedError
from klrisk.families import ParametricFamily, TrueModel, sample
from klrisk.likelihood import fit_mle

from .oracles import binomial_kl, kl_exponential, kl_exponential_censored, kl_normal, kl_weibull

EXP = ParametricFamily("exponential")
WEI = ParametricFamily("weibull")
NORM = ParametricFamily("normal")

# exponential rate 2 model against rate 1 truth, censored at 1
CENSORED_PAIR = 0.19396797570256594


def test_frozen_censored_value_matches_closed_form():
    assert kl_exponential_censored(2.0, 1.0, 1.0) == pytest.approx(CENSORED_PAIR, abs=1e-15)


def test_identical_laws():
    assert abs(kl_full((EXP, [1.0]), (EXP, [1.0]))) < 1e-10


def test_exponential_pair():
    assert kl_full((EXP, [2.0]), (EXP, [1.0])) == pytest.approx(0.306853, abs=1e-6)
    assert kl_full((EXP, [2.0]), (EXP, [1.0])) == pytest.approx(kl_exponential(2.0, 1.0), abs=1e-12)


def test_normal_shift():
    assert kl_full((NORM, [1.0, 1.0]), (NORM, [0.0, 1.0])) == pytest.approx(0.5, abs=1e-10)


def test_censored_pair():
    v = kl_censored((EXP, [2.0]), (EXP, [1.0]), 1.0)
    assert v == pytest.approx(CENSORED_PAIR, abs=1e-10)
    assert v <= kl_full((EXP, [2.0]), (EXP, [1.0]))


def test_censoring_far_out_recovers_full():
    assert kl_censored((EXP, [2.0]), (EXP, [1.0]), 50.0) == pytest.approx(kl_exponential(2.0, 1.0), abs=1e-8)


def test_kl_dispatch():
    assert kl((EXP, [2.0]), (EXP, [1.0])) == kl_full((EXP, [2.0]), (EXP, [1.0]))
    assert kl((EXP, [2.0]), TrueModel(EXP, (1.0,)), 1.0) == kl_censored((EXP, [2.0]), (EXP, [1.0]), 1.0)


@settings(max_examples=30, deadline=None)
@given(
    k1=st.floats(0.5, 4), s1=st.floats(0.3, 3), k2=st.floats(0.5, 4), s2=st.floats(0.3, 3)
)
def test_weibull_closed_form(k1, s1, k2, s2):
    # divergences reach ~1e6 here; beyond 1e3 the tolerance is relative
    expected = kl_weibull((k2, s2), (k1, s1))
    assert kl_full((WEI, [k2, s2]), (WEI, [k1, s1])) == pytest.approx(expected, abs=1e-8, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 10), b=st.floats(0.1, 10), C=st.floats(0.01, 20))
def test_censored_exponential_closed_form(a, b, C):
    assert kl_censored((EXP, [b]), (EXP, [a]), C) == pytest.approx(kl_exponential_censored(b, a, C), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(m1=st.floats(-3, 3), v1=st.floats(0.1, 4), m2=st.floats(-3, 3), v2=st.floats(0.1, 4))
def test_nonnegative_and_normal_closed_form(m1, v1, m2, v2):
    v = kl_full((NORM, [m2, v2]), (NORM, [m1, v1]))
    assert v >= -1e-10
    assert v == pytest.approx(kl_normal((m2, v2), (m1, v1)), abs=1e-8)


def test_binomial_divergence():
    b = ParametricFamily("binomial", 12)
    assert kl_full((b, [0.4]), (b, [0.3])) == pytest.approx(binomial_kl(12, 0.4, 0.3), abs=1e-14)


def test_coarsening_inequality_grid():
    pairs = [((EXP, [r2]), (EXP, [r1])) for r1 in (0.5, 1.0, 2.0) for r2 in (0.3, 1.5, 4.0)]
    pairs += [((WEI, [k2, 1.0]), (WEI, [k1, s1])) for k1, s1 in ((2.0, 1.0), (0.8, 2.0)) for k2 in (0.7, 1.0, 1.5, 3.0)]
    pairs += [((EXP, [1.0]), (WEI, [2.0, 1.0])), ((WEI, [1.5, 1.2]), (EXP, [0.7])), ((EXP, [0.9]), (WEI, [0.6, 0.5]))]
    assert len(pairs) == 20
    for model, truth in pairs:
        full = kl_full(model, truth)
        for C in (0.1, 0.5, 1.0, 2.0, 5.0):
            assert kl_censored(model, truth, C) <= full + 1e-8


def test_censored_increases_with_c():
    vals = [kl_censored((WEI, [1.0, 1.0]), (WEI, [2.0, 1.0]), C) for C in np.linspace(0.2, 4, 12)]
    assert np.all(np.diff(vals) >= -1e-10)


@pytest.mark.parametrize("a", [1e3, 1e-3])
def test_unit_invariance(a):
    assert kl_full((EXP, [2.0 / a]), (EXP, [1.0 / a])) == pytest.approx(kl_full((EXP, [2.0]), (EXP, [1.0])), abs=1e-8)
    base = kl_full((WEI, [1.3, 0.8]), (WEI, [2.0, 1.0]))
    assert kl_full((WEI, [1.3, 0.8 * a]), (WEI, [2.0, a])) == pytest.approx(base, abs=1e-8)


def test_asymmetry():
    forward = kl_full((EXP, [2.0]), (EXP, [1.0]))
    backward = kl_full((EXP, [1.0]), (EXP, [2.0]))
    assert abs(forward - backward) > 0.01


def test_errors():
    with pytest.raises(DivergenceUndefinedError):
        kl_full((EXP, [1.0]), (NORM, [0.0, 1.0]))
    with pytest.raises(DivergenceUndefinedError):
        kl_full((ParametricFamily("binomial", 5), [0.5]), (ParametricFamily("binomial", 6), [0.5]))
    with pytest.raises(DivergenceUndefinedError):
        kl_full((NORM, [0.0, 1.0]), (ParametricFamily("binomial", 5), [0.5]))
    with pytest.raises(DomainError):
        kl_censored((EXP, [2.0]), (EXP, [1.0]), 0.0)
    with pytest.raises(UnsupportedError):
        kl_censored((NORM, [0.0, 2.0]), (NORM, [0.0, 1.0]), 1.0)
    with pytest.raises(DomainError):
        kl_oracle((EXP, [2.0]), (EXP, [1.0]), n=10)


def test_oracle_identical_laws():
    est, se = kl_oracle((WEI, [2.0, 1.0]), (WEI, [2.0, 1.0]), n=10_000, seed=1)
    assert abs(est) <= 3 * se + 1e-15


def test_oracle_full_pair():
    est, se = kl_oracle((EXP, [2.0]), (EXP, [1.0]), n=1_000_000, seed=3)
    assert abs(est - kl_exponential(2.0, 1.0)) < 3 * se


def test_misspecification_well_specified():
    res = misspecification_risk(EXP, TrueModel(EXP, (1.0,)))
    assert res.theta_opt[0] == pytest.approx(1.0, abs=1e-6)
    assert res.risk < 1e-10
    assert not res.on_boundary


def test_misspecification_exponential_for_weibull():
    res = misspecification_risk(EXP, TrueModel(WEI, (2.0, 1.0)))
    assert res.theta_opt[0] == pytest.approx(2.0 / math.sqrt(math.pi), abs=1e-6)
    assert res.risk == pytest.approx(kl_weibull((1.0, math.sqrt(math.pi) / 2.0), (2.0, 1.0)), abs=1e-8)


def test_misspecification_is_large_sample_mle_limit():
    x = sample(WEI, [2.0, 1.0], 100_000, seed=8)
    fit = fit_mle(EXP, Dataset.from_arrays(x))
    assert abs(fit.theta_hat[0] - 2.0 / math.sqrt(math.pi)) < 0.01


def test_misspecification_censored_is_minimum():
    truth = TrueModel(WEI, (2.0, 1.0))
    res = misspecification_risk(EXP, truth, C=1.0)
    for r in res.theta_opt[0] * np.array([0.98, 0.99, 1.01, 1.02]):
        assert kl_censored((EXP, [r]), truth, 1.0) > res.risk
