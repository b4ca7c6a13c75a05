import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klrisk import likelihood
from klrisk.data import GroupedDataset
from klrisk.errors import DomainError
from klrisk.hlik import (
    HParams,
    compare_with_marginal,
    fit_hlik,
    h_gradient,
    h_loglik,
    profile_tau,
    simulate_grouped,
)
from klrisk.random_effects import RandomEffectsModel, SubjectStats

from .oracles import blup, gls_mean

NN = RandomEffectsModel("normal-normal", sigma2=1.0)
NN_FREE = RandomEffectsModel("normal-normal")
PL = RandomEffectsModel("poisson-lognormal")


@pytest.fixture(scope="module")
def balanced():
    return simulate_grouped(NN, [1.5], 1.0, 60, 4, seed=11)


@pytest.fixture(scope="module")
def unbalanced():
    rng = np.random.default_rng(8)
    groups = []
    for i in range(40):
        size = 1 + i % 6
        b = 0.8 * rng.standard_normal()
        groups.append((-0.5 + b + rng.standard_normal(size)).tolist())
    return GroupedDataset.from_lists(groups)


def _log_phi(b, tau):
    return -0.5 * math.log(2 * math.pi * tau * tau) - b * b / (2 * tau * tau)


def test_additivity_term_by_term(unbalanced):
    stats = SubjectStats.from_data(unbalanced)
    b = np.linspace(-1, 1, unbalanced.n_subjects)
    expected = 0.0
    for y, bi in zip(unbalanced.outcomes, b):
        expected += float(np.sum(-0.5 * math.log(2 * math.pi) - 0.5 * (y - 0.3 - bi) ** 2))
        expected += _log_phi(bi, 0.7)
    got = h_loglik(NN, HParams(np.array([0.3]), b), 0.7, unbalanced, stats)
    assert got == pytest.approx(expected, abs=1e-12 * abs(expected))


def test_zero_effects(unbalanced):
    stats = SubjectStats.from_data(unbalanced)
    b = np.zeros(unbalanced.n_subjects)
    cond = float(np.sum(NN.conditional_loglik([0.3], b, stats)))
    got = h_loglik(NN, HParams(np.array([0.3]), b), 2.0, unbalanced)
    assert got == pytest.approx(cond + unbalanced.n_subjects * _log_phi(0.0, 2.0), abs=1e-12)


def test_dimension_mismatch(balanced):
    with pytest.raises(DomainError):
        h_loglik(NN, HParams(np.array([0.0]), np.zeros(3)), 1.0, balanced)
    with pytest.raises(DomainError):
        h_loglik(NN, HParams(np.array([0.0]), np.zeros(balanced.n_subjects)), 0.0, balanced)


def test_best_effects_is_blup(unbalanced):
    stats = SubjectStats.from_data(unbalanced)
    b = NN.posterior_mode([0.2], 0.8, stats)
    assert np.allclose(b, blup(stats, 0.2, 1.0, 0.8), atol=1e-14)
    _, g_b = h_gradient(NN, np.array([0.2]), b, 0.8, stats)
    assert np.max(np.abs(g_b)) < 1e-12


def test_balanced_grand_mean(balanced):
    res = fit_hlik(NN, balanced, 1.0)
    grand = float(np.mean(np.concatenate(balanced.outcomes)))
    assert res.theta_hat[0] == pytest.approx(grand, abs=1e-8)


@pytest.mark.parametrize("tau", [0.3, 1.0, 3.0])
def test_gls_blup_oracle(unbalanced, tau):
    stats = SubjectStats.from_data(unbalanced)
    res = fit_hlik(NN, unbalanced, tau)
    mu = gls_mean(stats, 1.0, tau)
    assert abs(res.theta_hat[0] - mu) < 1e-8
    assert np.max(np.abs(res.b_hat - blup(stats, mu, 1.0, tau))) < 1e-8


@pytest.mark.parametrize("model", [NN, NN_FREE, PL], ids=["nn", "nn-free", "poisson"])
def test_joint_stationarity(model):
    truth = [0.5, 2.0] if model.theta_dim == 2 else [0.5]
    sim_model = model if model.kind == "poisson-lognormal" else NN
    data = simulate_grouped(sim_model, truth[:1], 0.8, 50, 3, seed=5)
    stats = SubjectStats.from_data(data)
    res = fit_hlik(model, data, 0.8)
    g_theta, g_b = h_gradient(model, res.theta_hat, res.b_hat, 0.8, stats)
    assert np.max(np.abs(g_theta)) < 1e-8
    assert np.max(np.abs(g_b)) < 1e-8
    assert res.fit.converged
    assert res.fit.p == model.theta_dim + data.n_subjects
    assert res.fit.loglik_at_max == pytest.approx(h_loglik(model, HParams(res.theta_hat, res.b_hat), 0.8, data))


def test_no_integration_in_fit(monkeypatch, balanced):
    def forbidden(*args, **kwargs):
        raise AssertionError("marginal quadrature reached from the h-likelihood fit")

    for name in ("marginal_loglik_terms", "marginal_loglik", "marginal_score", "gauss_hermite", "_nodes_for"):
        monkeypatch.setattr(likelihood, name, forbidden)
    res = fit_hlik(NN, balanced, 1.0)
    assert res.fit.converged
    poisson = simulate_grouped(PL, [0.2], 1.0, 30, 2, seed=2)
    assert fit_hlik(PL, poisson, 1.0).fit.converged


def test_hlik_matches_marginal_normal(unbalanced):
    cmp = compare_with_marginal(NN, unbalanced, 0.9)
    assert cmp.gap < 1e-8
    assert math.isfinite(cmp.hlik_value) and math.isfinite(cmp.marginal_loglik)


def test_gap_deterministic():
    data = simulate_grouped(PL, [0.3], 1.0, 100, 2, seed=21)
    a = compare_with_marginal(PL, data, 1.0)
    b = compare_with_marginal(PL, data, 1.0)
    assert a.gap == b.gap
    assert a.gap > 0


def test_profile_singleton(balanced):
    tau_hat, values = profile_tau(NN, balanced, [0.8])
    assert tau_hat == 0.8
    assert values.shape == (1,)


def test_profile_recovers_dispersion():
    data = simulate_grouped(NN, [0.0], 1.0, 200, 5, seed=4)
    grid = np.linspace(0.5, 1.5, 20)
    tau_hat, values = profile_tau(NN, data, grid)
    assert 0.7 <= tau_hat <= 1.3
    assert np.all(np.isfinite(values))
    for tau, v in zip(grid[::7], values[::7]):
        assert v == pytest.approx(fit_hlik(NN, data, float(tau)).fit.loglik_at_max, abs=1e-8)


@pytest.mark.parametrize("grid", [[], [0.5, 0.0], [-1.0], [1.0, 0.5], [0.5, math.inf]])
def test_profile_grid_errors(balanced, grid):
    with pytest.raises(DomainError):
        profile_tau(NN, balanced, grid)


def test_simulate_grouped_reproducible():
    a = simulate_grouped(PL, [0.0], 1.0, 10, 3, seed=9)
    b = simulate_grouped(PL, [0.0], 1.0, 10, 3, seed=9)
    assert [y.tolist() for y in a.outcomes] == [y.tolist() for y in b.outcomes]
    assert a.n_subjects == 10 and set(a.sizes.tolist()) == {3}
    assert all(np.all(y == np.round(y)) and np.all(y >= 0) for y in a.outcomes)


@settings(max_examples=25, deadline=None)
@given(
    mu=st.floats(-3, 3),
    tau=st.floats(0.2, 3.0),
    seed=st.integers(0, 10_000),
)
def test_gls_blup_property(mu, tau, seed):
    data = simulate_grouped(NN, [mu], tau, 15, 3, seed=seed)
    stats = SubjectStats.from_data(data)
    res = fit_hlik(NN, data, tau)
    m = gls_mean(stats, 1.0, tau)
    assert abs(res.theta_hat[0] - m) < 1e-8
    assert np.max(np.abs(res.b_hat - blup(stats, m, 1.0, tau))) < 1e-8


def test_poisson_rejects_non_counts(balanced):
    with pytest.raises(DomainError):
        fit_hlik(PL, balanced, 1.0)
    with pytest.raises(DomainError):
        fit_hlik(PL, GroupedDataset.from_lists([[1.0, -1.0], [2.0]]), 1.0)
