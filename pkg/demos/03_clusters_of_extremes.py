"""Extremes arrive in clusters.

A huge immigrant cohort decays geometrically under thinning, so one large
arrival produces a run of large values. The extremal index theta measures
this: 1/theta is the mean number of exceedances per cluster. We estimate it
two ways, look at the cluster-size distribution, and follow the path after
a big exceedance.
"""
import numpy as np

from heavybranch import (
    Bernoulli,
    DiscretePareto,
    ModelConfig,
    cluster_size_fit,
    decluster,
    extremal_index_estimate,
    simulate_path,
    tail_process_profile,
    theoretical_extremal_index,
)
from heavybranch.extremes import default_run_gap

mu, alpha = 0.5, 0.8
cfg = ModelConfig(Bernoulli(mu), DiscretePareto(alpha), regime="ModelI")
x = simulate_path(cfg, 3_000_000, seed=11).values
u = np.quantile(x, 0.999)
gap = default_run_gap(x.size)

theta = theoretical_extremal_index(mu, alpha)
print(f"theta = 1 - mu^alpha = {theta:.4f}")
print(f"runs estimate   (gap {gap}): {extremal_index_estimate(x, u, 'runs', gap):.4f}")
print(f"blocks estimate:            {extremal_index_estimate(x, u, 'blocks'):.4f}")

clusters = decluster(x, u, gap)
fit = cluster_size_fit(clusters, mu, alpha)
print(f"\n{fit.n_clusters} clusters above the 99.9% quantile ({u:.0f})")
print(f"{'size':>5} {'observed':>9} {'geometric':>10}")
for k, (o, t) in enumerate(zip(fit.empirical, fit.target), start=1):
    print(f"{k if k < 5 else '5+':>5} {o:>9.4f} {t:>10.4f}")
print(f"mean size {fit.mean_size:.3f} vs {fit.target_mean:.3f}; chi-square p = {fit.pvalue:.3f}")

print("\nAfter an exceedance the path shrinks by about mu per step:")
for t, med, target in tail_process_profile(x, 0.999, 4, mu=mu):
    print(f"  lag {t}: median X(s+t)/X(s) = {med:.4f}   mu^t = {target:.4f}")
