"""
Expected divergence of a maximum likelihood fit
===============================================

Averaging the divergence of the fitted law over repeated samples splits it
into the best divergence reachable inside the model and a statistical part
that falls like p / (2n) when the model contains the truth.
"""

from klrisk import ParametricFamily, TrueModel, misspecification_risk, simulate_ekl

exp = ParametricFamily("exponential")
weibull = ParametricFamily("weibull")

# Well specified: the statistical part should sit near p / (2n).
truth = TrueModel(exp, (1.0,))
for n in (100, 400):
    res = simulate_ekl(truth, exp, n, 400, seed=0)
    print(f"n = {n:4d}  mean divergence {res.mean_ekl:.5f} (se {res.standard_error:.5f})"
          f"  p/(2n) = {1 / (2 * n):.5f}  mean Tr(I^-1 J) = {res.mean_trace:.3f}")

# Misspecified: an exponential fitted to Weibull(2, 1) data keeps a floor
# that no amount of data removes.
truth = TrueModel(weibull, (2.0, 1.0))
best = misspecification_risk(exp, truth)
print(f"closest exponential rate {best.theta_opt[0]:.5f}, divergence {best.risk:.5f}")
for family in (exp, weibull):
    res = simulate_ekl(truth, family, 300, 200, seed=1, traces=False)
    print(f"{family.name:12s} mean {res.mean_ekl:.5f} = misspecification {res.misspec_component:.5f}"
          f" + statistical {res.statistical_component:.5f}")
