"""Command-line front end.

Every subcommand writes one JSON report to standard output::

    {"command": {...}, "input": {...}, "results": {...}, "warnings": [...]}

Exit status is 0 on success, 1 for usage and input errors and 2 for numerical
failures; error messages go to standard error only. ``--pretty`` renders the
same report as an indented ``key: value`` listing.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, GroupedDataset, parse_dataset, parse_grouped
from .divergence import kl, kl_oracle
from .errors import KLRiskError
from .families import TrueModel, parse_family_name, parse_family_spec
from .hlik import RandomEffectsModel, compare_with_marginal, fit_hlik, profile_tau
from .likelihood import fit_mle, score_and_information
from .penalized import SplineHazardModel, fit_penalized, fit_sieve, kkt_residual, make_knots, spline_loglik
from .selection import lcv_select, map_estimate, model_scores, risk_difference, simulate_ekl

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


# -- report assembly -------------------------------------------------------------


class Report:
    def __init__(self, args: argparse.Namespace):
        opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("handler", "pretty", "command")}
        self.command = {"name": args.command, "options": opts}
        self.input: dict | None = None
        self.results: dict = {}
        self.warnings: list[str] = []

    def clean(self, value, path: str):
        """Make ``value`` JSON-ready; non-finite numbers become null with a warning."""
        if isinstance(value, dict):
            return {k: self.clean(v, f"{path}.{k}") for k, v in value.items()}
        if isinstance(value, (list, tuple, np.ndarray)):
            return [self.clean(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if isinstance(value, (bool, np.bool_)):
            return bool(value)
        if isinstance(value, (int, np.integer)):
            return int(value)
        if isinstance(value, (float, np.floating)):
            v = float(value)
            if not math.isfinite(v):
                self.warnings.append(f"{path} is {v} and is reported as null")
                return None
            return v
        return value

    def as_dict(self) -> dict:
        results = self.clean(self.results, "results")
        return {
            "command": self.command,
            "input": self.input,
            "results": results,
            "warnings": list(self.warnings),
        }


def _render_pretty(obj, indent: int = 0) -> list[str]:
    pad = "  " * indent
    lines = []
    for key, val in obj.items():
        if isinstance(val, dict):
            lines.append(f"{pad}{key}:")
            lines.extend(_render_pretty(val, indent + 1))
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            lines.append(f"{pad}{key}:")
            for i, item in enumerate(val):
                lines.append(f"{pad}  [{i}]")
                lines.extend(_render_pretty(item, indent + 2))
        else:
            lines.append(f"{pad}{key}: {json.dumps(val)}")
    return lines


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _load_dataset(report: Report, path: str) -> Dataset:
    text = _read(path)
    data = parse_dataset(text)
    report.input = {"path": path, "rows": data.n, "events": data.n_events, "sha256": _digest(text)}
    return data


def _load_grouped(report: Report, path: str) -> GroupedDataset:
    text = _read(path)
    data = parse_grouped(text)
    report.input = {
        "path": path,
        "subjects": data.n_subjects,
        "rows": int(np.sum(data.sizes)),
        "sha256": _digest(text),
    }
    return data


def _fit_summary(report: Report, family, data: Dataset) -> tuple[dict, object]:
    if data.n_covariates and not any("covariate" in w for w in report.warnings):
        report.warnings.append(f"{data.n_covariates} covariate column(s) ignored by the parametric fit")
    fit = fit_mle(family, data)
    score, info = score_and_information(family, fit.theta_hat, data)
    try:
        se = info.standard_errors()
    except np.linalg.LinAlgError:
        se = np.full(family.param_dim, math.nan)
        report.warnings.append("observed information is singular; standard errors unavailable")
    out = {
        "family": str(family),
        "estimates": dict(zip(family.param_names, fit.theta_hat)),
        "standard_errors": dict(zip(family.param_names, se)),
        "loglik": fit.loglik_at_max,
        "p": fit.p,
        "score": list(score),
        "trace_ratio": info.trace_ratio(),
        "converged": fit.converged,
        "iterations": fit.iterations,
    }
    if fit.converged:
        out["aic"], out["ekl_estimate"] = model_scores(fit, data.n)
    else:
        report.warnings.append("optimizer did not converge; AIC is not reported")
    return out, fit


# -- subcommands -----------------------------------------------------------------


def cmd_fit(args, report: Report):
    family = parse_family_name(args.family)
    data = _load_dataset(report, args.data)
    report.results, _ = _fit_summary(report, family, data)


def cmd_kl(args, report: Report):
    truth = parse_family_spec(args.true)
    model = parse_family_spec(args.model)
    res = {"truth": args.true, "model": args.model, "censor": args.censor, "kl": kl(model, truth, args.censor)}
    if args.oracle is not None:
        est, se = kl_oracle(model, truth, args.censor, n=args.oracle, seed=args.seed)
        res["oracle"] = {"estimate": est, "standard_error": se, "draws": args.oracle, "seed": args.seed}
    report.results = res


def _knots(data: Dataset, m: int):
    return make_knots(data, m)


def cmd_penfit(args, report: Report):
    data = _load_dataset(report, args.data)
    basis = _knots(data, args.knots)
    res = {"basis_size": basis.m, "breakpoints": list(basis.breakpoints)}
    if args.lcv:
        if args.kappa_grid is None:
            raise UsageError("--lcv needs --kappa-grid")
        cv = lcv_select(data, basis, args.kappa_grid, folds=args.folds, seed=args.seed)
        kappa = cv.kappa_star
        res["lcv"] = {"kappa_grid": list(cv.kappa_grid), "cv_scores": list(cv.cv_scores), "folds": args.folds}
    else:
        if args.kappa is None:
            raise UsageError("penfit needs --kappa or --lcv")
        kappa = args.kappa
    fit, J = fit_penalized(data, basis, kappa)
    model = SplineHazardModel.from_vector(basis, fit.theta_hat, data.n_covariates)
    res.update(
        {
            "kappa": kappa,
            "coefficients": list(model.a),
            "beta": list(model.beta),
            "J": J,
            "loglik": spline_loglik(model, data),
            "penalized_loglik": fit.loglik_at_max,
            "converged": fit.converged,
            "iterations": fit.iterations,
            "grad_norm": fit.grad_norm,
        }
    )
    if not fit.converged:
        report.warnings.append("penalized fit did not reach the gradient tolerance")
    report.results = res


def cmd_sieve(args, report: Report):
    data = _load_dataset(report, args.data)
    basis = _knots(data, args.knots)
    sf = fit_sieve(data, basis, args.nu)
    model = SplineHazardModel.from_vector(basis, sf.fit.theta_hat, data.n_covariates)
    kkt = kkt_residual(model, sf.lam, args.nu, data)
    if not sf.fit.converged:
        report.warnings.append("constrained fit did not reach the gradient tolerance")
    if math.isinf(sf.lam):
        report.warnings.append("nu = 0 restricts the log-hazard to the affine null space; the multiplier is unbounded")
    report.results = {
        "nu": args.nu,
        "kappa_nu": sf.kappa_nu,
        "lambda": sf.lam,
        "J": model.J,
        "loglik": spline_loglik(model, data),
        "coefficients": list(model.a),
        "beta": list(model.beta),
        "kkt": kkt._asdict(),
        "converged": sf.fit.converged,
    }


def cmd_hfit(args, report: Report):
    data = _load_grouped(report, args.data)
    model = RandomEffectsModel(args.model, sigma2=args.sigma2)
    res = {"model": args.model}
    if args.tau_grid is not None:
        tau, values = profile_tau(model, data, args.tau_grid)
        res["profile"] = {"tau_grid": list(args.tau_grid), "values": list(values), "tau_hat": tau}
    elif args.tau is not None:
        tau = args.tau
    else:
        raise UsageError("hfit needs --tau or --tau-grid")
    if args.marginal:
        cmp = compare_with_marginal(model, data, tau, nodes=args.nodes)
        res["marginal"] = {
            "theta": dict(zip(model.theta_names, cmp.theta_marginal)),
            "loglik": cmp.marginal_loglik,
            "gap": cmp.gap,
            "nodes": args.nodes,
        }
    h = fit_hlik(model, data, tau)
    res.update(
        {
            "tau": tau,
            "theta": dict(zip(model.theta_names, h.theta_hat)),
            "random_effects": list(h.b_hat),
            "h_loglik": h.fit.loglik_at_max,
            "sweeps": h.sweeps,
            "theta_grad_norm": h.theta_grad_norm,
            "b_grad_norm": h.b_grad_norm,
        }
    )
    report.results = res


def cmd_compare(args, report: Report):
    data = _load_dataset(report, args.data)
    fa, fb = parse_family_name(args.family_a), parse_family_name(args.family_b)
    a, fit_a = _fit_summary(report, fa, data)
    b, fit_b = _fit_summary(report, fb, data)
    report.results = {"a": a, "b": b, "D": risk_difference(fit_a, fit_b, data.n)}


def cmd_simulate_ekl(args, report: Report):
    family, theta = parse_family_spec(args.true)
    fitted = parse_family_name(args.family)
    res = simulate_ekl(TrueModel(family, theta), fitted, args.n, args.reps, C=args.censor, seed=args.seed)
    report.results = {
        "mean_ekl": res.mean_ekl,
        "standard_error": res.standard_error,
        "misspec_component": res.misspec_component,
        "statistical_component": res.statistical_component,
        "mean_trace": res.mean_trace,
        "reps": res.reps,
        "failures": res.failures,
        "p_over_2n": fitted.param_dim / (2.0 * args.n),
    }


def cmd_map_demo(args, report: Report):
    res = {"k": args.k, "n": args.n, "flat": map_estimate(args.k, args.n, "flat")}
    try:
        res["jeffreys"] = map_estimate(args.k, args.n, "jeffreys")
    except KLRiskError as exc:
        res["jeffreys"] = math.nan
        report.warnings.append(str(exc))
    report.results = res


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="klrisk", description="Likelihood inference and Kullback-Leibler risk tools.")
    parser.add_argument("--version", action="version", version=f"klrisk {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, handler, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--pretty", action="store_true", help="human-readable rendering of the report")
        p.set_defaults(handler=handler)
        return p

    p = add("fit", cmd_fit, "maximum likelihood fit of a parametric family")
    p.add_argument("--family", required=True)
    p.add_argument("--data", required=True)

    p = add("kl", cmd_kl, "divergence of a model law from a true law")
    p.add_argument("--true", required=True, help="family spec, e.g. exponential:1.0")
    p.add_argument("--model", required=True)
    p.add_argument("--censor", type=float)
    p.add_argument("--oracle", type=int, help="Monte Carlo draws for an independent estimate")
    p.add_argument("--seed", type=int, default=0)

    p = add("penfit", cmd_penfit, "penalized spline log-hazard fit")
    p.add_argument("--data", required=True)
    p.add_argument("--knots", type=int, default=12, help="number of basis functions")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--kappa", type=float)
    g.add_argument("--lcv", action="store_true")
    p.add_argument("--kappa-grid", type=_float_list)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    p = add("sieve", cmd_sieve, "spline log-hazard fit under a roughness bound")
    p.add_argument("--data", required=True)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--knots", type=int, default=12)

    p = add("hfit", cmd_hfit, "h-likelihood fit of a random-intercept model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, choices=["normal-normal", "poisson-lognormal"])
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau", type=float)
    g.add_argument("--tau-grid", type=_float_list)
    p.add_argument("--sigma2", type=float, help="fix the residual variance (normal-normal)")
    p.add_argument("--marginal", action="store_true", help="also fit by marginal likelihood")
    p.add_argument("--nodes", type=int, default=40)

    p = add("compare", cmd_compare, "AIC comparison and risk difference of two families")
    p.add_argument("--data", required=True)
    p.add_argument("--family-a", required=True)
    p.add_argument("--family-b", required=True)

    p = add("simulate-ekl", cmd_simulate_ekl, "Monte Carlo expected divergence of a fitted family")
    p.add_argument("--true", required=True)
    p.add_argument("--family", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--censor", type=float)
    p.add_argument("--seed", type=int, default=0)

    p = add("map-demo", cmd_map_demo, "binomial posterior modes under flat and Jeffreys priors")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    return parser


def run(argv=None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, run the subcommand and print its report; returns the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
        report = Report(args)
        with warnings.catch_warnings():
            # overflow on the way to a failed fit is reported through the exit status
            warnings.simplefilter("ignore", RuntimeWarning)
            args.handler(args, report)
        doc = report.as_dict()
    except ArithmeticError as exc:
        print(f"klrisk: numerical failure: {exc}", file=stderr)
        diagnostics = getattr(exc, "diagnostics", None)
        if diagnostics:
            print(f"klrisk: diagnostics: {json.dumps(diagnostics, default=str, sort_keys=True)}", file=stderr)
        return EXIT_NUMERIC
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"klrisk: error: {exc}", file=stderr)
        return EXIT_USAGE
    except np.linalg.LinAlgError as exc:
        print(f"klrisk: numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    if args.pretty:
        stdout.write("\n".join(_render_pretty(doc)) + "\n")
    else:
        stdout.write(json.dumps(doc, indent=2, allow_nan=False) + "\n")
    return EXIT_OK


def main() -> None:
    try:
        code = run()
    except SystemExit as exc:  # --help / --version
        code = exc.code if isinstance(exc.code, int) else EXIT_OK
    sys.exit(code)
