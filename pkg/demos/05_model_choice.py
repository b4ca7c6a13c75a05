"""
Choosing between fitted models, and posterior modes
===================================================

AIC divided by 2n estimates the expected divergence of a fitted model up to
a constant, so the difference of two such values compares two models on the
same data. Posterior modes under a flat prior coincide with the maximum
likelihood estimate; other priors move them.
"""

from klrisk import Dataset, ParametricFamily, fit_mle, map_estimate, model_scores, risk_difference, sample

exp = ParametricFamily("exponential")
weibull = ParametricFamily("weibull")

for shape in (1.0, 1.3, 2.0):
    data = Dataset.from_arrays(sample(weibull, [shape, 1.0], 500, seed=7))
    fa, fb = fit_mle(exp, data), fit_mle(weibull, data)
    (aic_a, _), (aic_b, _) = model_scores(fa, data.n), model_scores(fb, data.n)
    d = risk_difference(fa, fb, data.n)
    winner = "weibull" if d > 0 else "exponential"
    print(f"true shape {shape}: AIC exponential {aic_a:8.2f}, weibull {aic_b:8.2f}, D = {d:+.5f} -> {winner}")

print()
print(" k   n   flat    jeffreys")
for k, n in ((6, 10), (5, 10), (1, 10), (2, 3), (40, 100)):
    print(f"{k:2d} {n:3d}  {map_estimate(k, n):.4f}  {map_estimate(k, n, 'jeffreys'):.4f}")
