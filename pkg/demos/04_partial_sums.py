"""Three behaviours of the running total S_n.

With light tails S_n is asymptotically normal, with the long-run variance
in place of the marginal variance. With index below 2 the normalised sums
keep a heavy tail of the same index and their law stops changing as n
doubles. Sizes here are small enough to run in under a minute.
"""
import math

import numpy as np
from scipy import stats

from heavybranch import (
    Bernoulli,
    DiscretePareto,
    ModelConfig,
    Poisson,
    long_run_variance,
    partial_sum_replicates,
    simulate_path,
    stable_diagnostics,
)
from heavybranch.pgf_oracle import stationary_long_run_variance

light = ModelConfig(Bernoulli(0.5), Poisson(1.0))
s2 = long_run_variance(simulate_path(light, 1_000_000, seed=1))
print(f"light tails: long-run variance {s2:.3f} (exact {stationary_long_run_variance(light):.3f}, marginal 2)")
rep = partial_sum_replicates(light, 5_000, 400, master_seed=2)
ks = stats.kstest(rep.normalized_sums, "norm", args=(0.0, math.sqrt(s2)))
print(f"  KS vs N(0, sigma^2): {ks.statistic:.4f}, p = {ks.pvalue:.3f}")

for alpha in (0.8, 1.5):
    cfg = ModelConfig(Bernoulli(0.5), DiscretePareto(alpha), regime="ModelI")
    zn = partial_sum_replicates(cfg, 2_000, 600, master_seed=3).normalized_sums
    z2 = partial_sum_replicates(cfg, 4_000, 600, master_seed=3, stream_offset=10_000).normalized_sums
    d = stable_diagnostics(zn, z2)
    print(f"\nalpha = {alpha}: Hill index of sums {d.hill_index:.3f} "
          f"(CI {d.hill_ci[0]:.2f} .. {d.hill_ci[1]:.2f})")
    print(f"  KS(n, 2n) = {d.self_similarity_ks:.4f}, 99% band {d.ks_band_99:.4f}")
    print(f"  quartiles of normalised sums: {np.round(np.quantile(zn, [0.25, 0.5, 0.75]), 3)}")
