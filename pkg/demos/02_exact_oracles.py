"""Ground truth without simulation, and where it is useful.

For light-tailed laws the stationary distribution can be computed exactly
in two unrelated ways: solving the truncated transition matrix, or
multiplying pgfs along the backward representation. Both are compared with
a long simulated path. The second half looks at the second-moment bound
for iterated thinning, which holds for mean offspring at least 1/2 and can
fail below that.
"""
import numpy as np

from heavybranch import (
    Bernoulli,
    Binomial,
    ModelConfig,
    exact_m2,
    m3_upper_bound,
    simulate_path,
    stationary_moments,
    stationary_pgf,
    stationary_pmf_bruteforce,
)

cfg = ModelConfig(Bernoulli(0.5), Bernoulli(0.5))
orc = stationary_pmf_bruteforce(cfg, state_cap=40)
path = simulate_path(cfg, 1_000_000, seed=3).values
emp = np.bincount(path, minlength=41)[:41] / path.size

print("Bernoulli(1/2) survival, Bernoulli(1/2) immigration")
print(f"{'s':>5} {'pmf pgf':>14} {'pgf product':>14}")
for s in (0.0, 0.25, 0.5, 0.75):
    print(f"{s:>5} {orc.pgf(s):>14.10f} {stationary_pgf(cfg, s):>14.10f}")

print(f"\n{'k':>3} {'exact pmf':>10} {'simulated':>10}")
for k in range(6):
    print(f"{k:>3} {orc.pmf[k]:>10.6f} {emp[k]:>10.6f}")
tv = 0.5 * np.abs(emp - orc.pmf).sum()
mean, var = stationary_moments(cfg)
print(f"total variation {tv:.5f}; mean {mean:.4f}, variance {var:.4f}")

print("\nSecond moment of k-fold thinning of one individual vs the bound E(A^2)(k+1)mu^k")
for p in (0.2, 0.5, 0.8):
    r = exact_m2(Bernoulli(p), 2)
    print(f"  Bernoulli({p}), k=2: exact {r.exact:.5f}, bound {r.bound:.5f}, holds: {r.holds}")

print("\nThird moment bound at k = 2..6 for Binomial(3, 0.2) offspring (mu = 0.6)")
for k in range(2, 7):
    r = m3_upper_bound(Binomial(3, 0.2), k)
    print(f"  k={k}: exact {r.exact:.6f} <= bound {r.bound:.6f}: {r.holds}")
