"""Simulation-free ground truth for the branching process with immigration.

Iterated offspring pgfs, the stationary pgf as an infinite product, exact
second and third moments of the iterated-thinning variables, stationary
moments, and a stationary pmf from the truncated transition matrix.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .heavy_rng import DistributionSpec, ParameterError, pgf_eval, pmf_array, raw_moment, variance
from .process_core import ModelConfig, check_ergodicity

__all__ = [
    "OracleError",
    "StationaryOracle",
    "MomentBound",
    "iterate_pgf",
    "stationary_pgf",
    "stationary_pgf_remainder",
    "exact_m2",
    "exact_m3",
    "m3_upper_bound",
    "stationary_moments",
    "stationary_long_run_variance",
    "stationary_pmf_bruteforce",
    "transition_matrix",
]


class OracleError(RuntimeError):
    pass


@dataclass
class StationaryOracle:
    pmf: np.ndarray
    mass_deficit: float
    pgf_depth: int
    config: ModelConfig
    iterations: int = 0

    @property
    def state_cap(self) -> int:
        return len(self.pmf) - 1

    def mean(self) -> float:
        return float(np.arange(len(self.pmf)) @ self.pmf)

    def variance(self) -> float:
        n = np.arange(len(self.pmf))
        m = self.mean()
        return float(((n - m) ** 2) @ self.pmf)

    def pgf(self, s: float) -> float:
        return float(np.polynomial.polynomial.polyval(s, self.pmf))

    def to_dict(self) -> dict:
        return {
            "state_cap": self.state_cap,
            "mass_deficit": self.mass_deficit,
            "pgf_depth": self.pgf_depth,
            "iterations": self.iterations,
            "config": self.config.to_dict(),
            "pmf": self.pmf.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_unit(s):
    if not 0.0 <= s <= 1.0:
        raise ParameterError(f"argument {s} outside [0, 1]")


def iterate_pgf(offspring: DistributionSpec, k: int, s: float) -> float:
    """``f(f(...f(s)))`` with ``k`` applications; the pgf of ``k``-fold thinning of 1."""
    _check_unit(s)
    if k < 0:
        raise ValueError("k must be >= 0")
    for _ in range(k):
        s = min(max(pgf_eval(offspring, s), 0.0), 1.0)
    return s


def stationary_pgf(config: ModelConfig, s: float, depth: int = 60) -> float:
    """``prod_{k=0}^{depth} g(f^k(s))``, the truncated stationary pgf.

    The cohorts of the backward representation are independent and the
    ``k``-th has pgf ``g(f^k(s))``, hence the product. With ``E(B)`` finite,
    ``1 - g(f^k(s)) <= E(B) mu^k (1 - s)``, so the neglected factors change
    the log of the product by at most ``E(B) mu^(K+1) (1-s) / (1-mu)`` (see
    :func:`stationary_pgf_remainder`).
    """
    _check_unit(s)
    if config.mu >= 1.0:
        raise OracleError("stationary pgf needs mu < 1")
    val = 1.0
    fk = s
    for _ in range(depth + 1):
        val *= pgf_eval(config.immigration, fk)
        fk = min(max(pgf_eval(config.offspring, fk), 0.0), 1.0)
    return val


def stationary_pgf_remainder(config: ModelConfig, s: float, depth: int) -> float:
    """Upper bound on ``|log pi(s) - log pi_depth(s)|``; ``inf`` if ``E(B)`` diverges."""
    mu = config.mu
    mean_b = raw_moment(config.immigration, 1)
    if not math.isfinite(mean_b):
        return math.inf
    # omitted factors are 1 - y_k with sum_k y_k <= y, so -log(prod) <= y / (1 - y)
    y = mean_b * mu ** (depth + 1) * (1.0 - s) / (1.0 - mu)
    return y / (1.0 - y) if y < 1.0 else math.inf


@dataclass
class MomentBound:
    k: int
    exact: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.exact <= self.bound


def _iterated_moments(A: DistributionSpec, k: int) -> tuple[float, float, float]:
    """Raw moments 1..3 of ``k``-fold iterated thinning of one ancestor.

    Uses ``A~(k) = sum_{j=1}^{A} A~_j(k-1)`` and the compound-sum identity
    ``E S^3 = E N E Y^3 + 3 E N(N-1) E Y^2 E Y + E N(N-1)(N-2) (E Y)^3``.
    """
    e1 = raw_moment(A, 1)
    e2 = raw_moment(A, 2)
    e3 = raw_moment(A, 3)
    f2 = e2 - e1
    f3 = e3 - 3 * e2 + 2 * e1
    m1, m2, m3 = 1.0, 1.0, 1.0
    for _ in range(k):
        m1, m2, m3 = (
            e1 * m1,
            e1 * m2 + f2 * m1 * m1,
            e1 * m3 + 3 * f2 * m2 * m1 + f3 * m1**3,
        )
    return m1, m2, m3


def exact_m2(offspring: DistributionSpec, k: int) -> MomentBound:
    """``E(A~(k))^2`` with the bound ``E(A^2) (k+1) mu^k``.

    Computed by the variance recursion
    ``Var_k = mu Var_{k-1} + Var(A) mu^(2(k-1))``, ``m2 = Var_k + mu^(2k)``.
    The returned object reports whether the bound holds; it fails for some
    offspring laws with ``mu < 1/2`` (e.g. Bernoulli(0.2) at k = 2).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    e2 = raw_moment(offspring, 2)
    if math.isinf(e2):
        raise OracleError("exact_m2 needs E(A^2) < inf")
    mu = raw_moment(offspring, 1)
    var_a = variance(offspring)
    v = 0.0
    for j in range(1, k + 1):
        v = mu * v + var_a * mu ** (2 * (j - 1))
    return MomentBound(k, v + mu ** (2 * k), e2 * (k + 1) * mu**k)


def exact_m3(offspring: DistributionSpec, k: int) -> float:
    if math.isinf(raw_moment(offspring, 3)):
        raise OracleError("exact_m3 needs E(A^3) < inf")
    return _iterated_moments(offspring, k)[2]


def m3_upper_bound(offspring: DistributionSpec, k: int) -> MomentBound:
    """``mu^k E(A^3) + E(A^3) k mu^(2k) + 3 E(A^2)^2 k^2 mu^k`` against the exact ``m3(k)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    e3 = raw_moment(offspring, 3)
    if math.isinf(e3):
        raise OracleError("m3 bound needs E(A^3) < inf")
    mu = raw_moment(offspring, 1)
    if not mu < 1.0:
        raise OracleError("m3 bound needs mu < 1")
    e2 = raw_moment(offspring, 2)
    bound = mu**k * e3 + e3 * k * mu ** (2 * k) + 3 * e2 * e2 * k * k * mu**k
    return MomentBound(k, exact_m3(offspring, k), bound)


def stationary_moments(config: ModelConfig) -> tuple[float, float]:
    """Stationary mean ``E(B)/(1-mu)`` and variance ``(Var(A) EX + Var(B)) / (1-mu^2)``.

    The variance follows from the law of total variance applied to one step
    of the sum recursion at stationarity. Diverging fields are ``inf``.
    """
    if config.variant != "sum":
        raise OracleError("stationary moments are for the sum variant")
    mu = config.mu
    if not mu < 1.0:
        raise OracleError("stationary moments need mu < 1")
    mean_b = raw_moment(config.immigration, 1)
    mean = mean_b / (1.0 - mu)
    var_a = variance(config.offspring)
    var_b = variance(config.immigration)
    if math.isinf(mean) or math.isinf(var_a) or math.isinf(var_b):
        return mean, math.inf
    return mean, (var_a * mean + var_b) / (1.0 - mu * mu)


def stationary_long_run_variance(config: ModelConfig) -> float:
    """``gamma(0) + 2 sum_i gamma(i)`` for the stationary sum chain.

    ``E(X_{t+h} | X_t) = mu^h X_t + const`` gives ``gamma(h) = mu^h gamma(0)``,
    hence ``gamma(0) (1 + mu) / (1 - mu)``.
    """
    mu = config.mu
    _, var = stationary_moments(config)
    return var * (1.0 + mu) / (1.0 - mu)


def transition_matrix(config: ModelConfig, state_cap: int) -> np.ndarray:
    """Substochastic kernel ``P[x, y] = P(theta o x + B = y)`` on ``0..state_cap``.

    Row ``x`` is the ``x``-fold convolution of the offspring pmf (built
    recursively, one convolution per row) convolved with the immigration
    pmf; mass above the cap is dropped, not renormalised.
    """
    if config.variant != "sum":
        raise OracleError("transition matrix implemented for the sum variant")
    n = state_cap + 1
    pa = pmf_array(config.offspring, state_cap)
    pb = pmf_array(config.immigration, state_cap)
    P = np.empty((n, n))
    thin_row = np.zeros(n)
    thin_row[0] = 1.0
    for x in range(n):
        if x > 0:
            thin_row = np.convolve(thin_row, pa)[:n]
        P[x] = np.convolve(thin_row, pb)[:n]
    return P


def stationary_pmf_bruteforce(
    config: ModelConfig,
    state_cap: int = 64,
    tol: float = 1e-9,
    pgf_depth: int = 60,
    max_iter: int = 100_000,
) -> StationaryOracle:
    """Stationary pmf by power iteration on the truncated transition matrix.

    Iterates ``pi <- pi P / |pi P|`` from the point mass at 0 until successive
    iterates differ by less than 1e-12 in total variation. ``mass_deficit``
    is the probability of leaving ``0..state_cap`` in one step from the fixed
    point; a deficit above ``tol`` raises :class:`OracleError`.
    """
    report = check_ergodicity(config)
    if not report.ergodic:
        raise OracleError(f"model is not ergodic: {report.describe()}")
    P = transition_matrix(config, state_cap)
    pi = np.zeros(state_cap + 1)
    pi[0] = 1.0
    for it in range(1, max_iter + 1):
        nxt = pi @ P
        nxt /= nxt.sum()
        diff = 0.5 * np.abs(nxt - pi).sum()
        pi = nxt
        if diff < 1e-12:
            break
    else:
        raise OracleError("power iteration did not converge")
    deficit = float(max(1.0 - (pi @ P).sum(), 0.0))
    if deficit > tol:
        raise OracleError(
            f"mass deficit {deficit:.3g} exceeds tol {tol:.3g}; increase state_cap"
        )
    return StationaryOracle(pi, deficit, pgf_depth, config, it)
