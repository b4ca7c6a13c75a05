"""Likelihood inference measured by Kullback-Leibler risk.

Parametric families and datasets with right censoring, divergences on full
and censored observations, maximum / penalized / sieve / hierarchical
likelihood estimation, and model choice by AIC, risk differences and
likelihood cross-validation.
"""

__version__ = "0.1.0"

from .data import Dataset, GroupedDataset, Observation, parse_dataset, parse_grouped
from .divergence import kl, kl_censored, kl_full, kl_oracle, misspecification_risk
from .errors import (
    BoundaryError,
    DegenerateError,
    DomainError,
    EmptyDataError,
    FoldError,
    FormatError,
    KLRiskError,
    NumericalError,
    UnsupportedError,
)
from .families import ParametricFamily, TrueModel, analytic_mle, parse_family_spec, sample
from .hlik import RandomEffectsModel, compare_with_marginal, fit_hlik, h_loglik, profile_tau, simulate_grouped
from .likelihood import InfoMatrices, fit_marginal, fit_mle, loglik, marginal_loglik, score_and_information
from .optim import FitResult, maximize
from .penalized import (
    SplineHazardModel,
    bathtub_hazard,
    fit_penalized,
    fit_sieve,
    kkt_residual,
    make_knots,
    penalized_loglik,
    penalty_matrix,
    simulate_survival,
    spline_loglik,
)
from .selection import lcv_select, map_estimate, model_scores, risk_difference, simulate_ekl

__all__ = [
    "BoundaryError",
    "Dataset",
    "DegenerateError",
    "DomainError",
    "EmptyDataError",
    "FitResult",
    "FoldError",
    "FormatError",
    "GroupedDataset",
    "InfoMatrices",
    "KLRiskError",
    "NumericalError",
    "Observation",
    "ParametricFamily",
    "RandomEffectsModel",
    "SplineHazardModel",
    "TrueModel",
    "UnsupportedError",
    "analytic_mle",
    "bathtub_hazard",
    "compare_with_marginal",
    "fit_hlik",
    "fit_marginal",
    "fit_mle",
    "fit_penalized",
    "fit_sieve",
    "h_loglik",
    "kkt_residual",
    "kl",
    "kl_censored",
    "kl_full",
    "kl_oracle",
    "lcv_select",
    "loglik",
    "make_knots",
    "map_estimate",
    "marginal_loglik",
    "maximize",
    "misspecification_risk",
    "model_scores",
    "parse_dataset",
    "parse_family_spec",
    "parse_grouped",
    "penalized_loglik",
    "penalty_matrix",
    "profile_tau",
    "risk_difference",
    "sample",
    "score_and_information",
    "simulate_ekl",
    "simulate_grouped",
    "simulate_survival",
    "spline_loglik",
]
