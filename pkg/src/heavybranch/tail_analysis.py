"""Tail constants, norming sequence, Hill estimation and tail-ratio curves."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .heavy_rng import DistributionSpec, as_generator, raw_moment, sample, tail_prob
from .process_core import ModelConfig, thin

__all__ = [
    "TailError",
    "TailReport",
    "RatioPoint",
    "model1_tail_constant",
    "model2_tail_constants",
    "model2_d_recursive",
    "norming_sequence",
    "theoretical_tail_scale",
    "hill",
    "tail_ratio_curve",
    "compound_tail_check",
    "compound_ratio_curve",
    "tail_report",
    "DEFAULT_QUANTILES",
]

DEFAULT_QUANTILES = (0.99, 0.999, 0.9999)


class TailError(ValueError):
    pass


def model1_tail_constant(mu: float, alpha: float) -> float:
    """``sum_k mu^(k alpha) = 1 / (1 - mu^alpha)``: limit of ``P(X > x) / P(B > x)``."""
    if not 0.0 < mu < 1.0:
        raise TailError(f"mu must lie in (0, 1), got {mu}")
    if alpha <= 0:
        raise TailError(f"alpha must be positive, got {alpha}")
    return 1.0 / (1.0 - mu**alpha)


def _check_model2(mu, alpha, c, mean_b):
    if not 0.0 < mu < 1.0:
        raise TailError(f"mu must lie in (0, 1), got {mu}")
    if not 1.0 < alpha < 2.0:
        raise TailError(f"alpha must lie in (1, 2), got {alpha}")
    if c < 0 or not math.isfinite(c):
        raise TailError(f"c must be finite and >= 0, got {c}")
    if mean_b < 0 or not math.isfinite(mean_b):
        raise TailError(f"E(B) must be finite, got {mean_b}")


def _d_closed(mu, alpha, k):
    if k == 0:
        return 0.0
    j = np.arange(k)
    return float(mu ** ((k - 1) * alpha) * np.sum(mu ** (j * (1.0 - alpha))))


def model2_d_recursive(mu: float, alpha: float, K: int) -> list[float]:
    """``d_k`` from ``d_k = mu d_{k-1} + mu^((k-1) alpha)``, ``d_0 = 0``."""
    d = [0.0]
    for k in range(1, K + 1):
        d.append(mu * d[-1] + mu ** ((k - 1) * alpha))
    return d


def model2_tail_constants(mu: float, alpha: float, c: float, mean_B: float, K: int | None = None):
    """Constants of the offspring-driven regime.

    ``d_k`` is the limit of ``P(A~(k) > x) / P(A > x)`` and
    ``psi_k = E(B) d_k + c mu^(k alpha)`` that of ``P(C_k > x) / P(A > x)``;
    ``d_0 = 0`` so ``psi_0 = c``. ``total`` sums ``psi_0 .. psi_K``. When
    ``K`` is None it is the smallest depth at which the neglected part,
    bounded by ``E(B) mu^(K+1) / ((1-mu)(mu-mu^alpha)) + c mu^((K+1)alpha) / (1-mu^alpha)``,
    is below 1e-8.

    Returns ``(d, psi, total)``.
    """
    _check_model2(mu, alpha, c, mean_B)
    if K is None:
        K = 0
        while _model2_remainder(mu, alpha, c, mean_B, K) >= 1e-8:
            K += 1
    d = [_d_closed(mu, alpha, k) for k in range(K + 1)]
    psi = [mean_B * dk + c * mu ** (k * alpha) for k, dk in enumerate(d)]
    return d, psi, float(math.fsum(psi))


def _model2_remainder(mu, alpha, c, mean_b, K):
    # d_k <= mu^k / (mu - mu^alpha) for alpha > 1
    rd = mu ** (K + 1) / ((1.0 - mu) * (mu - mu**alpha))
    rc = mu ** ((K + 1) * alpha) / (1.0 - mu**alpha)
    return mean_b * rd + c * rc


def norming_sequence(n: int, alpha: float, tail_scale: float) -> float:
    """``a_n = (C n)^(1/alpha)`` for ``P(X > x) ~ C x^-alpha``, so ``n P(X > a_n) -> 1``."""
    if n < 1 or alpha <= 0 or tail_scale <= 0:
        raise TailError("norming sequence needs n >= 1, alpha > 0, tail_scale > 0")
    return (tail_scale * n) ** (1.0 / alpha)


def theoretical_tail_scale(config: ModelConfig) -> tuple[float, float]:
    """``(alpha, C)`` with ``P(X > x) ~ C x^-alpha`` for a ModelI/ModelII config."""
    A, B = config.offspring, config.immigration
    mu = config.mu
    if config.regime == "ModelI":
        return B.alpha, tail_prob(B, 0) * model1_tail_constant(mu, B.alpha)
    if config.regime == "ModelII":
        _, _, total = model2_tail_constants(mu, A.alpha, config.tail_ratio_c, raw_moment(B, 1))
        return A.alpha, tail_prob(A, 0) * total
    raise TailError(f"no tail constant for regime {config.regime!r}")


def hill(samples, k_order: int, shift: float = 0.5) -> tuple[float, float, float]:
    """Hill estimate of the tail index from the top ``k_order`` order statistics.

    Integer data get a +0.5 continuity shift before taking logs, so ties at
    small values never produce ``log 0``; pass ``shift=0`` for continuous
    data. The interval is the asymptotic normal one,
    ``alpha_hat (1 +- 1.96 / sqrt(k))``.
    """
    if k_order < 10:
        raise TailError("k_order must be >= 10")
    x = np.asarray(samples, dtype=np.float64)
    x = x[x > 0]
    if x.size < k_order + 1:
        raise TailError(f"need at least {k_order + 1} positive samples, got {x.size}")
    top = np.partition(x, x.size - k_order - 1)[x.size - k_order - 1 :]
    top = np.log(top + shift)
    ref = top.min()
    mean_excess = float(np.mean(top - ref)) * (k_order + 1) / k_order
    if mean_excess <= 0:
        raise TailError("no tail variation among the top order statistics")
    a = 1.0 / mean_excess
    half = 1.96 * a / math.sqrt(k_order)
    return a, a - half, a + half


@dataclass
class RatioPoint:
    x: float
    ratio: float
    se: float
    target: float = math.nan
    quantile: float = math.nan
    reliable: bool = True


def tail_ratio_curve(samples, ref_tail: Callable[[float], float], probes: Sequence[float]) -> list[RatioPoint]:
    """Empirical ``P(X > x) / ref_tail(x)`` at each probe with binomial standard errors.

    Probes at or above the sample maximum get a zero numerator and are
    marked unreliable.
    """
    x = np.sort(np.asarray(samples))
    n = x.size
    if n == 0:
        raise TailError("empty sample")
    top = x[-1]
    out = []
    for probe in probes:
        count = n - np.searchsorted(x, probe, side="right")
        p_hat = count / n
        ref = ref_tail(probe)
        if ref <= 0:
            raise TailError(f"reference tail vanishes at {probe}")
        se = math.sqrt(p_hat * (1 - p_hat) / n) / ref
        out.append(RatioPoint(float(probe), p_hat / ref, se, reliable=bool(probe < top and count > 0)))
    return out


def compound_ratio_curve(s, mu: float, immigration: DistributionSpec, probes: Sequence[float]) -> list[RatioPoint]:
    """``P(S > x) / P(B > x / mu)`` at each probe for simulated compound sums ``s``.

    With ``mu = 0`` the sum is identically zero; the ratios are reported as
    0 and flagged unreliable.
    """
    if not mu < 1.0:
        raise TailError(f"compound tail check needs mu < 1, got {mu}")
    if mu == 0.0:
        return [RatioPoint(float(p), 0.0, 0.0, 1.0, reliable=False) for p in probes]
    pts = tail_ratio_curve(s, lambda v: tail_prob(immigration, v / mu), probes)
    for pt in pts:
        pt.target = 1.0
    return pts


def compound_tail_check(
    offspring: DistributionSpec,
    immigration: DistributionSpec,
    probes=None,
    reps: int = 1_000_000,
    rng=None,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
) -> list[RatioPoint]:
    """Ratios ``P(sum_{i<=B} A_i > x) / P(B > x / mu)`` from ``reps`` simulations.

    Probes default to empirical quantiles of the compound sum.
    """
    mu = raw_moment(offspring, 1)
    if not mu < 1.0:
        raise TailError(f"compound tail check needs mu < 1, got {mu}")
    gen = as_generator(rng)
    s = thin(sample(immigration, gen, reps), offspring, gen)
    qs = [math.nan] * len(probes) if probes is not None else list(quantiles)
    if probes is None:
        probes = [float(v) for v in np.quantile(s, quantiles)]
    pts = compound_ratio_curve(s, mu, immigration, probes)
    for pt, q in zip(pts, qs):
        pt.quantile = q
    return pts


@dataclass
class TailReport:
    alpha_hat: float
    ci_low: float
    ci_high: float
    probe_points: list[float]
    ratio_curve: list[RatioPoint]
    constant_theory: float
    regime: str
    sample_size: int = 0
    k_order: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.probe_points, self.probe_points[1:])):
            raise TailError("probe thresholds must be strictly increasing")

    CSV_COLUMNS = ("quantile", "x", "empirical_ratio", "se", "target", "relative_error", "reliable")

    def rows(self):
        for pt in self.ratio_curve:
            rel = pt.ratio / pt.target - 1.0 if pt.target else math.nan
            yield (pt.quantile, pt.x, pt.ratio, pt.se, pt.target, rel, int(pt.reliable))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "sample_size": self.sample_size,
            "alpha_hat": self.alpha_hat,
            "alpha_ci": [self.ci_low, self.ci_high],
            "k_order": self.k_order,
            "constant_theory": self.constant_theory,
            "probes": [dict(zip(self.CSV_COLUMNS, row)) for row in self.rows()],
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def tail_report(samples, config: ModelConfig, quantiles=DEFAULT_QUANTILES, k_order: int | None = None) -> TailReport:
    """Tail ratios at empirical quantiles against the regime's theoretical constant.

    ModelI compares with ``P(B > x)``, ModelII with ``P(A > x)``.
    """
    x = np.asarray(samples)
    mu = config.mu
    if config.regime == "ModelI":
        ref = config.immigration
        target = model1_tail_constant(mu, ref.alpha)
    elif config.regime == "ModelII":
        ref = config.offspring
        _, _, target = model2_tail_constants(
            mu, ref.alpha, config.tail_ratio_c, raw_moment(config.immigration, 1)
        )
    else:
        raise TailError("tail report needs a ModelI or ModelII config")
    probes = np.quantile(x, quantiles)
    if np.any(np.diff(probes) <= 0):
        raise TailError(f"quantile probes not strictly increasing: {probes.tolist()}")
    pts = tail_ratio_curve(x, lambda v: tail_prob(ref, v), probes)
    for pt, q in zip(pts, quantiles):
        pt.target = target
        pt.quantile = q
    if k_order is None:
        k_order = max(10, int(round(x.size * (1 - quantiles[1]))))
    a, lo, hi = hill(x, k_order)
    return TailReport(a, lo, hi, [float(p) for p in probes], pts, target, config.regime, int(x.size), k_order)
