"""Extremal index, block maxima, declustering and tail-process diagnostics.

All functions accept either a :class:`~heavybranch.process_core.PathSample`
or a plain integer array as ``path``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .process_core import PathSample

__all__ = [
    "ExtremesError",
    "ExtremesReport",
    "ClusterSizeFit",
    "theoretical_extremal_index",
    "block_maxima",
    "frechet_cdf",
    "frechet_gof",
    "extremal_index_estimate",
    "default_block_length",
    "default_run_gap",
    "decluster",
    "cluster_size_pmf",
    "cluster_size_fit",
    "tail_process_profile",
    "intercluster_exponential_check",
    "anticlustering_profile",
]

SIZE_CLASSES = 5
MIN_EXCEEDANCES = 20
MIN_CLUSTERS = 100
MIN_EVENTS = 200


class ExtremesError(ValueError):
    pass


def _values(path) -> np.ndarray:
    if isinstance(path, PathSample):
        return path.values
    return np.asarray(path)


def theoretical_extremal_index(mu: float, alpha: float) -> float:
    """``1 - mu^alpha``."""
    if not 0.0 < mu < 1.0 or alpha <= 0:
        raise ExtremesError(f"need mu in (0, 1) and alpha > 0, got mu={mu}, alpha={alpha}")
    return 1.0 - mu**alpha


def default_block_length(n: int) -> int:
    return max(1, int(math.floor(n**0.4)))


def default_run_gap(n: int) -> int:
    return max(1, int(math.ceil(math.log(n))))


def block_maxima(path, block_len: int) -> np.ndarray:
    """Maxima over consecutive blocks; an incomplete trailing block is dropped."""
    x = _values(path)
    if block_len < 1:
        raise ExtremesError("block_len must be >= 1")
    m = len(x) // block_len
    if m == 0:
        raise ExtremesError(f"path of length {len(x)} shorter than one block")
    return x[: m * block_len].reshape(m, block_len).max(axis=1)


def frechet_cdf(x, theta: float, alpha: float):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-theta * np.power(np.maximum(x, 1e-300), -alpha)), 0.0)


def frechet_gof(maxima, a_n: float, theta: float, alpha: float) -> float:
    """KS distance between ``maxima / a_n`` and ``exp(-theta x^-alpha)``."""
    m = np.asarray(maxima, dtype=np.float64)
    if m.size == 0:
        raise ExtremesError("no maxima")
    if not 0 < theta <= 1 or alpha <= 0 or a_n <= 0:
        raise ExtremesError("need theta in (0, 1], alpha > 0, a_n > 0")
    res = stats.kstest(m / a_n, lambda v: frechet_cdf(v, theta, alpha))
    return float(res.statistic)


def extremal_index_estimate(path, threshold: float, method: str = "runs", param: int | None = None) -> float:
    """Blocks or runs estimate of the extremal index above ``threshold``.

    blocks
        ``#(blocks with an exceedance) / #exceedances``, blocks of length
        ``param`` (default ``floor(len^0.4)``), trailing partial block dropped.
    runs
        fraction of exceedances followed by ``param`` non-exceedances
        (default ``ceil(log len)``). Times past the end of the path count as
        non-exceedances.
    """
    x = _values(path)
    exc = x > threshold
    if method == "blocks":
        b = param or default_block_length(len(x))
        m = len(x) // b
        if m == 0:
            raise ExtremesError("path shorter than one block")
        e = exc[: m * b].reshape(m, b)
        n_exc = int(e.sum())
        if n_exc < MIN_EXCEEDANCES:
            raise ExtremesError(f"only {n_exc} exceedances above {threshold}; need {MIN_EXCEEDANCES}")
        est = e.any(axis=1).sum() / n_exc
    elif method == "runs":
        r = param or default_run_gap(len(x))
        idx = np.flatnonzero(exc)
        if idx.size < MIN_EXCEEDANCES:
            raise ExtremesError(f"only {idx.size} exceedances above {threshold}; need {MIN_EXCEEDANCES}")
        gaps = np.diff(idx, append=np.iinfo(np.int64).max)
        est = np.count_nonzero(gaps > r) / idx.size
    else:
        raise ExtremesError(f"unknown method {method!r}")
    return float(min(max(est, 0.0), 1.0))


def decluster(path, threshold: float, gap: int) -> list[np.ndarray]:
    """Split exceedance times into clusters; neighbours at most ``gap`` apart share a cluster."""
    if gap < 1:
        raise ExtremesError("gap must be >= 1")
    idx = np.flatnonzero(_values(path) > threshold)
    if idx.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx) > gap) + 1
    return np.split(idx, cuts)


def cluster_size_pmf(mu: float, alpha: float, kmax: int = SIZE_CLASSES) -> np.ndarray:
    """``P(kappa = k) = (1 - mu^alpha) mu^(alpha (k-1))`` for ``k = 1..kmax-1``, tail mass last."""
    r = mu**alpha
    k = np.arange(1, kmax)
    p = (1.0 - r) * r ** (k - 1)
    return np.append(p, r ** (kmax - 1))


class ClusterSizeFit(NamedTuple):
    empirical: np.ndarray
    target: np.ndarray
    chi2: float
    pvalue: float
    mean_size: float
    target_mean: float
    n_clusters: int


def cluster_size_fit(clusters: Sequence, mu: float, alpha: float) -> ClusterSizeFit:
    """Compare cluster sizes with the geometric law of mean ``1 / (1 - mu^alpha)``.

    Sizes are pooled into classes 1, 2, 3, 4 and >= 5; the chi-square test
    has 4 degrees of freedom since nothing is fitted.
    """
    n = len(clusters)
    if n < MIN_CLUSTERS:
        raise ExtremesError(f"only {n} clusters; need {MIN_CLUSTERS}")
    sizes = np.fromiter((len(c) for c in clusters), dtype=np.int64, count=n)
    counts = np.bincount(np.minimum(sizes, SIZE_CLASSES), minlength=SIZE_CLASSES + 1)[1:]
    target = cluster_size_pmf(mu, alpha) if mu > 0 else np.eye(SIZE_CLASSES)[0]
    expected = n * target
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(expected > 0, (counts - expected) ** 2 / expected, np.where(counts > 0, np.inf, 0.0))
    chi2 = float(terms.sum())
    target_mean = 1.0 / (1.0 - mu**alpha) if mu > 0 else 1.0
    return ClusterSizeFit(
        counts / n, target, chi2, float(stats.chi2.sf(chi2, SIZE_CLASSES - 1)),
        float(sizes.mean()), target_mean, n,
    )


def tail_process_profile(path, quantile: float, max_lag: int, mu: float | None = None):
    """Median of ``X_{s+t} / X_s`` over times ``s`` with ``X_s`` above the empirical quantile.

    Returns rows ``(t, median ratio, mu^t)`` for ``t = 0..max_lag``. ``mu``
    defaults to the offspring mean of the path's configuration.
    """
    if quantile < 0.99 or quantile >= 1:
        raise ExtremesError("quantile must lie in [0.99, 1)")
    if mu is None:
        if not isinstance(path, PathSample):
            raise ExtremesError("pass mu when path is a plain array")
        mu = path.config.mu
    x = _values(path)
    u = np.quantile(x, quantile)
    s = np.flatnonzero(x[: len(x) - max_lag] > u)
    if s.size < MIN_EVENTS:
        raise ExtremesError(f"only {s.size} conditioning events; need {MIN_EVENTS}")
    base = x[s].astype(np.float64)
    rows = []
    for t in range(max_lag + 1):
        rows.append((t, float(np.median(x[s + t] / base)), mu**t))
    return rows


def intercluster_exponential_check(clusters: Sequence, n: int, theta: float, u: float = 1.0, alpha: float = 1.0) -> float:
    """KS distance of scaled gaps between cluster starts from Exp(1).

    Cluster starts above ``a_n u`` form, on the time scale ``n``, a Poisson
    process of rate ``theta u^-alpha``; gaps are scaled by ``theta u^-alpha / n``.
    """
    if len(clusters) < MIN_EXCEEDANCES:
        raise ExtremesError(f"only {len(clusters)} clusters; need {MIN_EXCEEDANCES}")
    starts = np.array([c[0] for c in clusters], dtype=np.float64)
    gaps = np.diff(starts) * theta * u ** (-alpha) / n
    return float(stats.kstest(gaps, "expon").statistic)


def anticlustering_profile(path, threshold: float, r_n: int) -> np.ndarray:
    """``P(max_{m <= |t| <= r_n} X_t > threshold | X_0 > threshold)`` for ``m = 1..r_n``.

    Conditioning times closer than ``r_n`` to either end are skipped. The
    result is non-increasing in ``m`` by construction.
    """
    x = _values(path)
    if r_n < 1:
        raise ExtremesError("r_n must be >= 1")
    s = np.flatnonzero(x > threshold)
    s = s[(s >= r_n) & (s < len(x) - r_n)]
    if s.size < MIN_EXCEEDANCES:
        raise ExtremesError(f"only {s.size} usable exceedances; need {MIN_EXCEEDANCES}")
    d = np.arange(1, r_n + 1)
    hit = (x[s[:, None] + d] > threshold) | (x[s[:, None] - d] > threshold)
    # any exceedance at distance >= m: reverse cumulative OR over d
    beyond = np.logical_or.accumulate(hit[:, ::-1], axis=1)[:, ::-1]
    return beyond.mean(axis=0)


@dataclass
class ExtremesReport:
    theta_theory: float
    theta_blocks: float
    theta_runs: float
    threshold: float
    frechet_ks: float = math.nan
    cluster_fit: ClusterSizeFit | None = None
    tail_profile: list = field(default_factory=list)
    intercluster_ks: float = math.nan
    anticlustering: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("theta_theory", "theta_blocks", "theta_runs"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ExtremesError(f"{name}={v} outside [0, 1]")

    CSV_COLUMNS = ("section", "index", "estimate", "target")

    def rows(self):
        yield ("theta_blocks", 0, self.theta_blocks, self.theta_theory)
        yield ("theta_runs", 0, self.theta_runs, self.theta_theory)
        yield ("frechet_ks", 0, self.frechet_ks, math.nan)
        yield ("intercluster_ks", 0, self.intercluster_ks, math.nan)
        if self.cluster_fit is not None:
            f = self.cluster_fit
            for k, (e, t) in enumerate(zip(f.empirical, f.target), start=1):
                yield ("cluster_size", k, e, t)
            yield ("cluster_mean", 0, f.mean_size, f.target_mean)
        for t, med, target in self.tail_profile:
            yield ("tail_profile", t, med, target)
        if self.anticlustering is not None:
            for m, p in enumerate(self.anticlustering, start=1):
                yield ("anticlustering", m, p, math.nan)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for sec, i, est, tgt in self.rows():
            w.writerow([sec, i, repr(float(est)), repr(float(tgt))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        out = {
            "theta_theory": self.theta_theory,
            "theta_blocks": self.theta_blocks,
            "theta_runs": self.theta_runs,
            "threshold": self.threshold,
            "frechet_ks": self.frechet_ks,
            "intercluster_ks": self.intercluster_ks,
            "tail_profile": [list(r) for r in self.tail_profile],
        }
        if self.cluster_fit is not None:
            f = self.cluster_fit
            out["cluster_sizes"] = {
                "empirical": f.empirical.tolist(),
                "target": f.target.tolist(),
                "chi2": f.chi2,
                "pvalue": f.pvalue,
                "mean_size": f.mean_size,
                "target_mean": f.target_mean,
                "n_clusters": f.n_clusters,
            }
        if self.anticlustering is not None:
            out["anticlustering"] = self.anticlustering.tolist()
        out.update(self.extra)
        return _clean(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _clean(obj):
    # NaN is not valid JSON
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj
