import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from heavybranch.extremes import (
    ExtremesError,
    ExtremesReport,
    anticlustering_profile,
    block_maxima,
    cluster_size_fit,
    cluster_size_pmf,
    decluster,
    extremal_index_estimate,
    frechet_cdf,
    frechet_gof,
    intercluster_exponential_check,
    tail_process_profile,
    theoretical_extremal_index,
)
from heavybranch.heavy_rng import Bernoulli, Dirac, DiscretePareto, RandomStream, sample
from heavybranch.process_core import ModelConfig, simulate_path


def test_theoretical_index():
    assert theoretical_extremal_index(0.5, 1.0) == pytest.approx(0.5)
    assert theoretical_extremal_index(0.5, 1.5) == pytest.approx(0.646447, abs=1e-6)
    assert theoretical_extremal_index(1e-6, 1.0) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ExtremesError):
        theoretical_extremal_index(1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 0.999), st.floats(0.1, 5.0))
def test_index_inside_unit_interval(mu, alpha):
    theta = theoretical_extremal_index(mu, alpha)
    assert 0.0 < theta <= 1.0
    assert theta == pytest.approx(1.0 - mu**alpha, abs=1e-15)


def test_block_maxima():
    assert block_maxima([1, 5, 2, 9, 3, 3], 3).tolist() == [5, 9]
    assert block_maxima([1, 5, 2, 9, 3, 3, 100], 3).tolist() == [5, 9]
    assert block_maxima([4, 1, 7], 3).tolist() == [7]
    assert block_maxima(np.full(12, 2), 4).tolist() == [2, 2, 2]
    with pytest.raises(ExtremesError):
        block_maxima([1, 2], 5)


def frechet_draws(m, theta, alpha, gen):
    u = gen.random(m)
    return (-np.log(u) / theta) ** (-1.0 / alpha)


def test_frechet_gof_on_exact_draws():
    gen = np.random.default_rng(41)
    ks = frechet_gof(frechet_draws(10_000, 0.4, 0.8, gen), 1.0, 0.4, 0.8)
    assert ks < 1.36 / math.sqrt(10_000)


def test_frechet_gof_pass_rate():
    gen = np.random.default_rng(42)
    m = 500
    band = 1.358 / math.sqrt(m)
    passes = sum(frechet_gof(frechet_draws(m, 0.6, 1.5, gen), 1.0, 0.6, 1.5) < band for _ in range(100))
    assert passes >= 90


def test_frechet_gof_degenerate_and_empty():
    assert frechet_gof(np.zeros(50), 10.0, 1.0, 1.0) == pytest.approx(1.0)
    with pytest.raises(ExtremesError):
        frechet_gof([], 1.0, 1.0, 1.0)


def test_frechet_cdf_values():
    assert frechet_cdf(1.0, 0.5, 2.0) == pytest.approx(math.exp(-0.5))
    assert frechet_cdf(0.0, 0.5, 2.0) == 0.0


def test_runs_estimator_on_pairs():
    x = np.zeros(10_000)
    starts = np.arange(50, 10_000, 200)
    x[starts] = x[starts + 1] = 10
    assert extremal_index_estimate(x, 5, "runs", 1) == pytest.approx(0.5)
    assert extremal_index_estimate(x, 5, "blocks", 100) == pytest.approx(0.5)


def test_estimators_iid():
    x = sample(DiscretePareto(0.8), RandomStream(43, 0), 1_000_000)
    u = np.quantile(x, 0.999)
    assert 0.9 <= extremal_index_estimate(x, u, "runs") <= 1.0
    assert 0.9 <= extremal_index_estimate(x, u, "blocks", 30) <= 1.0


def test_estimator_guards():
    x = np.arange(100)
    with pytest.raises(ExtremesError, match="exceedances"):
        extremal_index_estimate(x, 95, "runs", 2)
    with pytest.raises(ExtremesError):
        extremal_index_estimate(x, 10, "moments", 2)


def test_decluster_examples():
    x = np.zeros(12)
    x[[3, 4, 9]] = 1
    assert [c.tolist() for c in decluster(x, 0.5, 2)] == [[3, 4], [9]]
    assert decluster(np.zeros(5), 0.5, 1) == []
    assert [c.tolist() for c in decluster([0, 1, 1, 1, 0], 0.5, 1)] == [[1, 2, 3]]
    with pytest.raises(ExtremesError):
        decluster(x, 0.5, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=300), st.integers(1, 6), st.integers(0, 4))
def test_decluster_is_partition(values, gap, thr):
    x = np.array(values)
    clusters = decluster(x, thr, gap)
    flat = np.concatenate(clusters) if clusters else np.array([], dtype=int)
    assert np.array_equal(flat, np.flatnonzero(x > thr))
    assert len(clusters) <= flat.size
    for c in clusters:
        assert np.all(np.diff(c) <= gap)
    for a, b in zip(clusters, clusters[1:]):
        assert b[0] - a[-1] > gap


def test_cluster_pmf_examples():
    p = cluster_size_pmf(0.5, 1.0)
    assert p[:4].tolist() == pytest.approx([0.5, 0.25, 0.125, 0.0625])
    assert p.sum() == pytest.approx(1.0)


def test_cluster_fit_iid_all_singletons():
    clusters = [np.array([i]) for i in range(0, 3000, 10)]
    fit = cluster_size_fit(clusters, 1e-9, 1.0)
    assert fit.mean_size == 1.0
    assert fit.empirical[0] == 1.0


def test_cluster_fit_on_geometric_sizes():
    gen = np.random.default_rng(44)
    r = 0.5**0.8
    sizes = gen.geometric(1 - r, 3000)
    clusters = [np.arange(s) for s in sizes]
    fit = cluster_size_fit(clusters, 0.5, 0.8)
    assert fit.pvalue > 0.01
    assert fit.target_mean == pytest.approx(2.3493435, abs=1e-6)


def test_cluster_fit_guard():
    with pytest.raises(ExtremesError):
        cluster_size_fit([np.array([1])] * 10, 0.5, 1.0)


def test_tail_profile_lag_zero_and_iid():
    x = sample(DiscretePareto(0.8), RandomStream(45, 0), 500_000)
    prof = tail_process_profile(x, 0.999, 2, mu=0.0)
    assert prof[0][1] == 1.0
    assert prof[1][1] < 0.01 and prof[1][2] == 0.0


def test_tail_profile_guards():
    with pytest.raises(ExtremesError):
        tail_process_profile(np.arange(1000), 0.9, 2, mu=0.5)
    with pytest.raises(ExtremesError):
        tail_process_profile(np.arange(1000), 0.999, 2, mu=0.5)
    with pytest.raises(ExtremesError):
        tail_process_profile(np.arange(100_000), 0.999, 2)


def test_intercluster_on_poisson_arrivals():
    gen = np.random.default_rng(46)
    n, theta = 10_000, 0.4
    starts = np.cumsum(gen.exponential(n / theta, 400)).astype(np.int64)
    clusters = [np.array([s]) for s in starts]
    ks = intercluster_exponential_check(clusters, n, theta)
    assert ks < 1.36 / math.sqrt(399)
    with pytest.raises(ExtremesError):
        intercluster_exponential_check(clusters[:1], n, theta)


def test_anticlustering_profile_nonincreasing():
    cfg = ModelConfig(Bernoulli(0.5), DiscretePareto(0.8), regime="ModelI")
    x = simulate_path(cfg, 1_000_000, seed=47).values
    prof = anticlustering_profile(x, np.quantile(x, 0.999), 30)
    assert np.all(np.diff(prof) <= 0)
    assert prof[0] > prof[19]
    assert prof[19] < 0.1


def test_report_invariants_and_export():
    fit = cluster_size_fit([np.arange(k % 3 + 1) for k in range(200)], 0.5, 1.0)
    rep = ExtremesReport(0.5, 0.48, 0.52, 100.0, 0.02, fit, [(0, 1.0, 1.0), (1, 0.5, 0.5)], 0.05,
                         np.array([0.3, 0.1]))
    text = rep.to_csv()
    assert text.startswith("section,index,estimate,target\n")
    assert "cluster_size,5," in text and "tail_profile,1," in text
    data = json.loads(rep.to_json())
    assert data["cluster_sizes"]["n_clusters"] == 200
    with pytest.raises(ExtremesError):
        ExtremesReport(0.5, 1.2, 0.5, 1.0)


def test_model1_path_estimators():
    cfg = ModelConfig(Bernoulli(0.5), DiscretePareto(0.8), regime="ModelI")
    x = simulate_path(cfg, 2_000_000, seed=48).values
    u = np.quantile(x, 0.999)
    theta = theoretical_extremal_index(0.5, 0.8)
    runs = extremal_index_estimate(x, u, "runs")
    blocks = extremal_index_estimate(x, u, "blocks")
    assert abs(runs - theta) < 0.1
    assert abs(blocks - runs) < 0.1
    prof = tail_process_profile(x, 0.999, 3, mu=0.5)
    for t, med, target in prof:
        assert abs(med / target - 1) < 0.2
    assert stats.chi2.sf(cluster_size_fit(decluster(x, u, 15), 0.5, 0.8).chi2, 4) > 0.001
