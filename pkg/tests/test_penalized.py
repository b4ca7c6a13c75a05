import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from klrisk.data import Dataset
from klrisk.errors import DegenerateError, DomainError
from klrisk.families import ParametricFamily, sample
from klrisk.likelihood import loglik
from klrisk.penalized import (
    HazardDesign,
    SplineBasis,
    SplineHazardModel,
    fit_affine,
    fit_penalized,
    fit_sieve,
    kkt_residual,
    make_knots,
    penalized_loglik,
    penalty_matrix,
    simulate_survival,
    spline_loglik,
)

T = 4.0
BASIS = SplineBasis(np.linspace(0.0, T, 10))


def coefficients_for(basis, f):
    """Least-squares B-spline coefficients of ``f`` (exact when ``f`` is in the span)."""
    u = np.linspace(basis.lower, basis.upper, 400)
    coef, *_ = np.linalg.lstsq(basis.design(u), f(u), rcond=None)
    return coef


def test_penalty_annihilates_affine():
    om = penalty_matrix(BASIS)
    a = coefficients_for(BASIS, lambda u: 2.0 + 3.0 * u)
    assert np.allclose(a, BASIS.affine_coefficients(2.0, 3.0), atol=1e-12)
    assert BASIS.roughness(a) < 1e-12
    assert np.max(np.abs(om @ a)) < 1e-12 * np.abs(om).sum(axis=1).max() * np.abs(a).max()


def test_penalty_quadratic():
    a = coefficients_for(BASIS, lambda u: u * u)
    assert a @ penalty_matrix(BASIS) @ a == pytest.approx(4.0 * T, abs=1e-10)


def test_penalty_symmetric_psd():
    om = penalty_matrix(BASIS)
    assert np.array_equal(om, om.T)
    ev = np.linalg.eigvalsh(om)
    assert ev.min() >= -1e-12
    # exactly two null directions: constants and slopes
    assert np.sum(ev < 1e-9 * ev.max()) == 2


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=BASIS.m, max_size=BASIS.m))
def test_penalty_matches_direct_integration(a):
    a = np.array(a)
    spline = BASIS._spline
    d2 = spline.derivative(2)
    br = BASIS.breakpoints
    direct = sum(
        integrate.quad(lambda u: float(d2(u) @ a) ** 2, lo, hi, epsabs=1e-13)[0] for lo, hi in zip(br[:-1], br[1:])
    )
    assert a @ BASIS.omega @ a == pytest.approx(direct, rel=1e-10, abs=1e-10)


def test_degenerate_knots():
    with pytest.raises(DomainError):
        SplineBasis([0.0, 1.0, 1.0, 2.0])
    with pytest.raises(DomainError):
        penalty_matrix([0.0])
    with pytest.raises(DomainError):
        make_knots(Dataset.from_arrays([1.0, 2.0]), m=3)


def test_constant_hazard_embeds_exponential():
    x = sample(ParametricFamily("exponential"), [0.7], 300, seed=21)
    data = Dataset.censor_at(x, 2.0)
    basis = make_knots(data)
    model = SplineHazardModel(basis, np.full(basis.m, math.log(0.7)), [])
    assert spline_loglik(model, data) == pytest.approx(loglik(ParametricFamily("exponential"), [0.7], data), abs=1e-8)


def test_covariate_loglik_closed_form():
    t = np.array([0.5, 1.0, 1.5, 2.0])
    z = np.array([[0.0], [1.0], [-1.0], [2.0]])
    data = Dataset.from_arrays(t, [1, 0, 1, 1], z)
    basis = make_knots(data, 6)
    a0, b = -0.3, 0.4
    model = SplineHazardModel(basis, np.full(basis.m, a0), [b])
    eta = a0 + b * z[:, 0]
    expected = np.sum(data.events * eta - np.exp(eta) * t)
    assert spline_loglik(model, data) == pytest.approx(expected, abs=1e-12)


def test_penalized_loglik_basics(bathtub_data, bathtub_basis):
    rng = np.random.default_rng(0)
    model = SplineHazardModel(bathtub_basis, rng.normal(-1, 0.3, bathtub_basis.m), [])
    assert penalized_loglik(model, bathtub_data, 0.0) == spline_loglik(model, bathtub_data)
    vals = [penalized_loglik(model, bathtub_data, k) for k in (0.0, 0.1, 1.0, 10.0)]
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(DomainError):
        penalized_loglik(model, bathtub_data, -1.0)


def test_cumulative_hazard_rule_refinement(bathtub_data, bathtub_basis, kappa_path):
    coarse = HazardDesign(bathtub_basis, bathtub_data)
    fine = HazardDesign(bathtub_basis, bathtub_data, points=70)
    for kappa, (fit, _) in kappa_path.items():
        if kappa > 0:
            assert coarse.loglik(fit.theta_hat) == pytest.approx(fine.loglik(fit.theta_hat), abs=1e-9)
    # the unpenalized fit oscillates strongly between knots; the rule is then good to 1e-9 relative
    fit0 = kappa_path[0.0][0]
    assert coarse.loglik(fit0.theta_hat) == pytest.approx(fine.loglik(fit0.theta_hat), rel=1e-9)
    # a deliberately wiggly log-hazard still agrees to ~1e-11 relative
    theta = np.sin(np.arange(bathtub_basis.m)) - 0.5
    assert coarse.loglik(theta) == pytest.approx(fine.loglik(theta), rel=1e-10)


def test_exact_derivatives_match_differences(bathtub_data, bathtub_basis):
    z = np.linspace(-1, 1, bathtub_data.n)[:, None]
    data = Dataset.from_arrays(bathtub_data.times, bathtub_data.events, z)
    design = HazardDesign(bathtub_basis, data)
    theta = np.concatenate([np.cos(np.arange(bathtub_basis.m)) - 1.0, [0.3]])
    assert np.allclose(design.score(theta), design.numeric_gradient(theta), rtol=1e-6, atol=1e-6)
    h = design.hessian(theta)
    step = 1e-5
    num = np.array([(design.score(theta + step * e) - design.score(theta - step * e)) / (2 * step) for e in np.eye(theta.size)])
    assert np.allclose(h, num, rtol=1e-6, atol=1e-5 * np.abs(h).max())


def test_concavity(bathtub_data, bathtub_basis):
    design = HazardDesign(bathtub_basis, bathtub_data)
    rng = np.random.default_rng(3)
    for _ in range(5):
        theta = rng.normal(-1, 1, bathtub_basis.m)
        neg_pl = -design.hessian(theta) + 1.0 * design.penalty_hessian()
        assert np.linalg.eigvalsh(neg_pl).min() >= -1e-8


@pytest.fixture(scope="module")
def kappa_path(bathtub_data, bathtub_basis):
    out = {}
    theta = None
    for kappa in (0.0, 0.01, 0.1, 1.0, 10.0):
        fit, J = fit_penalized(bathtub_data, bathtub_basis, kappa, theta0=theta)
        theta = fit.theta_hat
        out[kappa] = (fit, J)
    return out


def test_unpenalized_fit_matches_independent_optimizer(bathtub_data, bathtub_basis, kappa_path):
    fit, _ = kappa_path[0.0]
    design = HazardDesign(bathtub_basis, bathtub_data)
    ref = optimize.minimize(
        lambda t: -design.loglik(t),
        np.zeros(bathtub_basis.m),
        jac=lambda t: -design.score(t),
        hess=lambda t: -design.hessian(t),
        method="trust-exact",
        options={"gtol": 1e-10},
    )
    assert fit.loglik_at_max == pytest.approx(-ref.fun, abs=1e-8)


def test_j_decreasing_along_kappa(kappa_path):
    js = [kappa_path[k][1] for k in (0.01, 0.1, 1.0, 10.0)]
    assert np.all(np.diff(js) < 0)


def test_stationarity_of_penalized_fit(bathtub_data, bathtub_basis, kappa_path):
    design = HazardDesign(bathtub_basis, bathtub_data)
    for kappa, (fit, _) in kappa_path.items():
        g = design.score(fit.theta_hat) - kappa * design.penalty_gradient(fit.theta_hat)
        assert np.max(np.abs(g)) < 1e-6


def test_huge_penalty_reaches_null_space(bathtub_data, bathtub_basis, kappa_path):
    _, J = fit_penalized(bathtub_data, bathtub_basis, 1e6, theta0=kappa_path[10.0][0].theta_hat)
    assert J < 1e-6


def test_fit_requires_events(bathtub_basis):
    with pytest.raises(DegenerateError):
        fit_penalized(Dataset.from_arrays([1.0, 2.0], [0, 0]), bathtub_basis, 1.0)


def test_sieve_inactive_constraint(bathtub_data, bathtub_basis, kappa_path):
    fit0, j0 = kappa_path[0.0]
    sf = fit_sieve(bathtub_data, bathtub_basis, j0 * 1.5)
    assert sf.lam == 0.0 and sf.kappa_nu == 0.0
    assert np.allclose(sf.fit.theta_hat, fit0.theta_hat, atol=1e-6)
    model = SplineHazardModel.from_vector(bathtub_basis, sf.fit.theta_hat)
    r = kkt_residual(model, 0.0, j0 * 1.5, bathtub_data)
    assert r.grad_residual < 1e-6 and r.primal_feasibility == 0 and r.complementarity == 0 and r.dual_feasibility


def test_sieve_zero_is_affine(bathtub_data, bathtub_basis):
    sf = fit_sieve(bathtub_data, bathtub_basis, 0.0)
    assert math.isinf(sf.lam)
    model = SplineHazardModel.from_vector(bathtub_basis, sf.fit.theta_hat)
    assert abs(model.J) < 1e-10
    assert sf.fit.p == 2
    aff = fit_affine(bathtub_data, bathtub_basis)
    assert np.allclose(aff.theta_hat, sf.fit.theta_hat)


@pytest.mark.parametrize("kappa", [0.037, 3.3])
def test_duality_off_grid(bathtub_data, bathtub_basis, kappa):
    pen, J = fit_penalized(bathtub_data, bathtub_basis, kappa)
    sf = fit_sieve(bathtub_data, bathtub_basis, J)
    assert sf.lam == pytest.approx(kappa, rel=1e-4)
    assert np.max(np.abs(sf.fit.theta_hat - pen.theta_hat)) < 1e-6
    model = SplineHazardModel.from_vector(bathtub_basis, sf.fit.theta_hat)
    assert abs(model.J - J) < 1e-8
    r = kkt_residual(model, sf.lam, J, bathtub_data)
    assert r.grad_residual < 1e-6 and r.primal_feasibility < 1e-8 and r.complementarity < 1e-6


def test_kkt_detects_non_stationary_point(bathtub_data, bathtub_basis, kappa_path):
    fit, J = kappa_path[1.0]
    model = SplineHazardModel.from_vector(bathtub_basis, fit.theta_hat + 0.1)
    assert kkt_residual(model, 1.0, J, bathtub_data).grad_residual > 1e-3


def test_sieve_domain():
    with pytest.raises(DomainError):
        fit_sieve(Dataset.from_arrays([1.0, 2.0]), [0.0, 1.0, 2.0], -1.0)


def test_simulate_constant_hazard_is_exponential():
    d = simulate_survival(lambda u: np.full_like(u, 0.8), 20_000, seed=5, censor_time=50.0)
    assert d.n_events == d.n
    assert stats.kstest(d.times, stats.expon(scale=1 / 0.8).cdf).statistic < 1.95 / math.sqrt(d.n)


def test_covariate_effect_recovered():
    rng = np.random.default_rng(9)
    z = rng.normal(size=(600, 1))
    data = simulate_survival(lambda u: 0.5 + 0.2 * u, 600, seed=9, censor_time=3.0, covariates=z, beta=[0.7])
    fit, _ = fit_penalized(data, make_knots(data, 8), 1.0)
    assert abs(fit.theta_hat[-1] - 0.7) < 0.15
