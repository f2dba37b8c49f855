"""Partial sums of the stationary chain: Gaussian and stable regimes."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .heavy_rng import raw_moment
from .process_core import DEFAULT_BURN_IN, ModelConfig, PathSample, _require_ergodic, simulate_path
from .tail_analysis import hill, norming_sequence, theoretical_tail_scale

__all__ = [
    "SumsError",
    "SumsReport",
    "StableDiagnostics",
    "regime_of",
    "regime_centering",
    "partial_sums",
    "partial_sum_replicates",
    "long_run_variance",
    "batch_means_variance",
    "stable_diagnostics",
    "ks_two_sample_band",
    "MIN_REPLICATES",
]

MIN_REPLICATES = 100
MIN_STABLE_REPLICATES = 500


class SumsError(ValueError):
    pass


def regime_of(alpha: float) -> str:
    if alpha == 1.0:
        raise SumsError("alpha = 1 has no limit theory here; pick alpha != 1")
    if alpha > 2.0:
        return "gaussian"
    if alpha < 1.0:
        return "stable_low"
    if alpha < 2.0:
        return "stable_mid"
    raise SumsError("alpha = 2 is a boundary case without a prescribed normalisation")


def _driving_alpha(config: ModelConfig) -> float:
    if config.regime in ("ModelI", "ModelII"):
        return config.driving_alpha
    return math.inf


def regime_centering(config: ModelConfig, alpha: float, n: int, a_n: float | None = None) -> tuple[float, float]:
    """``(center, scale)`` for ``(S_n - center) / scale``.

    ========== =================== ==========
    alpha       center              scale
    ========== =================== ==========
    > 2         n E(B) / (1 - mu)   sqrt(n)
    (0, 1)      0                   a_n
    (1, 2)      n E(X)              a_n
    ========== =================== ==========

    ``E(X) = E(B) / (1 - mu)``; in the middle regime this differs from
    truncated-mean centering only by a bounded shift of the limit.
    """
    regime = regime_of(alpha)
    mean_x = raw_moment(config.immigration, 1) / (1.0 - config.mu)
    if regime == "gaussian":
        return n * mean_x, math.sqrt(n)
    if a_n is None:
        a_alpha, c = theoretical_tail_scale(config)
        a_n = norming_sequence(n, a_alpha, c)
    if a_n <= 0:
        raise SumsError("a_n must be positive")
    if regime == "stable_low":
        return 0.0, a_n
    return n * mean_x, a_n


def partial_sums(config: ModelConfig, n: int, reps: int, master_seed: int, stream_offset: int = 0,
                 burn_in: int = DEFAULT_BURN_IN, threads: int = 1) -> np.ndarray:
    """``S_n`` for ``reps`` independent stretches, replicate ``i`` on stream ``stream_offset + i``.

    Each stretch has its own burn-in. Results are ordered by replicate
    index whatever the thread count.
    """
    def one(i):
        p = simulate_path(config, n, burn_in=burn_in, seed=master_seed, stream=stream_offset + i)
        return float(p.values.sum(dtype=np.float64))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(one, range(reps)))
    else:
        out = [one(i) for i in range(reps)]
    return np.array(out)


@dataclass
class SumsReport:
    regime: str
    normalized_sums: np.ndarray
    center_used: float
    scale_used: float
    n: int
    alpha: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.normalized_sums) < MIN_REPLICATES:
            raise SumsError(f"need at least {MIN_REPLICATES} replicates")
        if not self.scale_used > 0:
            raise SumsError("scale must be positive")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("replicate", "normalized_sum"))
        for i, v in enumerate(self.normalized_sums):
            w.writerow((i, repr(float(v))))
        return buf.getvalue()

    def to_dict(self) -> dict:
        z = np.asarray(self.normalized_sums)
        return {
            "regime": self.regime,
            "alpha": None if math.isinf(self.alpha) else self.alpha,
            "n": self.n,
            "replicates": int(z.size),
            "center_used": self.center_used,
            "scale_used": self.scale_used,
            "mean": float(z.mean()),
            "median": float(np.median(z)),
            **self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def partial_sum_replicates(config: ModelConfig, n: int, reps: int, master_seed: int, stream_offset: int = 0,
                           burn_in: int = DEFAULT_BURN_IN, threads: int = 1) -> SumsReport:
    """Normalised partial sums of ``reps`` independent stationary stretches of length ``n``."""
    if reps < MIN_REPLICATES:
        raise SumsError(f"reps must be >= {MIN_REPLICATES}")
    _require_ergodic(config)
    alpha = _driving_alpha(config)
    regime = regime_of(alpha)
    center, scale = regime_centering(config, alpha, n)
    s = partial_sums(config, n, reps, master_seed, stream_offset, burn_in, threads)
    return SumsReport(regime, (s - center) / scale, center, scale, n, alpha)


def long_run_variance(path, max_lag: int | None = None) -> float:
    """``gamma(0) + 2 sum_{i=1}^{max_lag} gamma(i)`` from sample autocovariances.

    ``max_lag`` defaults to ``ceil(10 log10(len))``.
    """
    x = path.values if isinstance(path, PathSample) else np.asarray(path)
    x = x.astype(np.float64)
    n = x.size
    if max_lag is None:
        max_lag = int(math.ceil(10 * math.log10(n)))
    if not 0 <= max_lag < n:
        raise SumsError("max_lag must be in [0, len)")
    y = x - x.mean()
    acov = [float(y @ y) / n] + [float(y[:-i] @ y[i:]) / n for i in range(1, max_lag + 1)]
    s2 = acov[0] + 2.0 * sum(acov[1:])
    if s2 < 0:
        raise SumsError(f"negative long-run variance {s2:.4g}; use a longer path or a smaller max_lag")
    return s2


def batch_means_variance(path, batch: int | None = None) -> float:
    """Long-run variance from non-overlapping batch means, batch length ``floor(sqrt(len))``."""
    x = path.values if isinstance(path, PathSample) else np.asarray(path)
    x = x.astype(np.float64)
    b = batch or int(math.isqrt(x.size))
    m = x.size // b
    if m < 2:
        raise SumsError("need at least two batches")
    means = x[: m * b].reshape(m, b).mean(axis=1)
    return float(b * means.var(ddof=1))


def ks_two_sample_band(m: int, k: int, level: float = 0.99) -> float:
    """Asymptotic critical value of the two-sample KS distance."""
    c = math.sqrt(-0.5 * math.log((1.0 - level) / 2.0))
    return c * math.sqrt((m + k) / (m * k))


class StableDiagnostics(NamedTuple):
    hill_index: float
    hill_ci: tuple[float, float]
    self_similarity_ks: float
    ks_band_99: float
    stable_like: bool


def stable_diagnostics(sums_n, sums_2n, k_order: int | None = None) -> StableDiagnostics:
    """Tail index of ``|Z_n - median(Z_n)|`` and the KS distance between ``Z_n`` and ``Z_2n``.

    Both inputs must be normalised with their own ``a_n``. The Hill
    estimator is not location invariant, so the sums are centred at their
    median first; ``k_order`` defaults to 10% of the replicates.
    ``stable_like`` is False when the whole Hill interval lies above 2,
    which is what Gaussian-regime input produces.
    """
    zn = np.asarray(sums_n, dtype=np.float64)
    z2 = np.asarray(sums_2n, dtype=np.float64)
    if min(zn.size, z2.size) < MIN_STABLE_REPLICATES:
        raise SumsError(f"need at least {MIN_STABLE_REPLICATES} replicates at each length")
    k = k_order or max(10, zn.size // 10)
    a, lo, hi = hill(np.abs(zn - np.median(zn)), k, shift=0.0)
    ks = float(stats.ks_2samp(zn, z2).statistic)
    return StableDiagnostics(a, (lo, hi), ks, ks_two_sample_band(zn.size, z2.size), bool(lo <= 2.0))
