import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from heavybranch.heavy_rng import Bernoulli, Binomial, Dirac, Geometric, Poisson, RandomStream, pgf_eval
from heavybranch.pgf_oracle import (
    OracleError,
    _iterated_moments,
    exact_m2,
    exact_m3,
    iterate_pgf,
    m3_upper_bound,
    stationary_long_run_variance,
    stationary_moments,
    stationary_pgf,
    stationary_pgf_remainder,
    stationary_pmf_bruteforce,
    transition_matrix,
)
from heavybranch.process_core import ModelConfig, sample_iterated_thinning


def test_iterate_pgf():
    assert iterate_pgf(Bernoulli(0.5), 3, 0.0) == pytest.approx(0.875)
    assert iterate_pgf(Bernoulli(0.5), 0, 0.3) == 0.3
    s = 0.4
    f = pgf_eval(Poisson(0.6), pgf_eval(Poisson(0.6), s))
    assert iterate_pgf(Poisson(0.6), 2, s) == pytest.approx(f)


def test_bernoulli_poisson_stationary_law_is_poisson():
    # binomial thinning preserves the Poisson family: X ~ Poisson(lam / (1 - p))
    cfg = ModelConfig(Bernoulli(0.4), Poisson(1.2))
    orc = stationary_pmf_bruteforce(cfg, state_cap=50)
    assert np.abs(orc.pmf - stats.poisson.pmf(np.arange(51), 2.0)).max() < 1e-10
    for s in (0.0, 0.3, 0.9):
        assert stationary_pgf(cfg, s) == pytest.approx(math.exp(2.0 * (s - 1)), abs=1e-12)


def test_pmf_and_product_agree():
    cfg = ModelConfig(Binomial(2, 0.3), Geometric(0.5))
    orc = stationary_pmf_bruteforce(cfg, state_cap=120)
    for s in (0.0, 0.25, 0.5, 0.75, 0.95):
        assert abs(orc.pgf(s) - stationary_pgf(cfg, s, 80)) < 1e-9
    mean, var = stationary_moments(cfg)
    assert orc.mean() == pytest.approx(mean, rel=1e-8)
    assert orc.variance() == pytest.approx(var, rel=1e-7)


def test_bernoulli_bernoulli_moments():
    cfg = ModelConfig(Bernoulli(0.5), Bernoulli(0.5))
    mean, var = stationary_moments(cfg)
    assert mean == pytest.approx(1.0)
    assert var == pytest.approx(2 / 3)
    assert stationary_pmf_bruteforce(cfg, 40).variance() == pytest.approx(2 / 3, abs=1e-9)


def test_pgf_remainder_bound():
    cfg = ModelConfig(Bernoulli(0.5), Poisson(1.0))
    exact = math.log(stationary_pgf(cfg, 0.2, 200))
    for depth in (2, 5, 10):
        err = abs(exact - math.log(stationary_pgf(cfg, 0.2, depth)))
        assert err <= stationary_pgf_remainder(cfg, 0.2, depth)


def test_mass_deficit_guard():
    cfg = ModelConfig(Bernoulli(0.5), Poisson(4.0))
    with pytest.raises(OracleError):
        stationary_pmf_bruteforce(cfg, state_cap=8)


def test_non_ergodic_oracle_refused():
    with pytest.raises(OracleError):
        stationary_pmf_bruteforce(ModelConfig(Dirac(1), Poisson(1.0)))


def test_transition_rows_substochastic():
    P = transition_matrix(ModelConfig(Poisson(0.5), Poisson(1.0)), 30)
    rows = P.sum(axis=1)
    assert np.all(rows <= 1 + 1e-12) and rows[0] == pytest.approx(1.0, abs=1e-12)


def test_long_run_variance_oracle():
    cfg = ModelConfig(Bernoulli(0.5), Poisson(1.0))
    # Var X = 2, (1 + mu) / (1 - mu) = 3
    assert stationary_long_run_variance(cfg) == pytest.approx(6.0)


def test_m2_examples():
    r = exact_m2(Binomial(2, 0.25), 2)
    assert r.exact == pytest.approx(0.34375) and r.bound == pytest.approx(0.46875) and r.holds


def test_m2_bound_fails_for_small_mean():
    r = exact_m2(Bernoulli(0.2), 2)
    assert r.exact == pytest.approx(0.04)
    assert r.bound == pytest.approx(0.024)
    assert not r.holds


def test_m3_bound_fails_for_small_mean():
    r = m3_upper_bound(Bernoulli(0.1), 2)
    assert not r.holds
    assert m3_upper_bound(Bernoulli(0.5), 2).holds


def test_m3_refuses_critical():
    with pytest.raises(OracleError):
        m3_upper_bound(Dirac(1), 3)


@pytest.mark.parametrize("A", [Bernoulli(0.7), Binomial(3, 0.3), Poisson(0.8), Geometric(0.6)])
def test_two_moment_routes_agree(A):
    for k in range(1, 12):
        assert exact_m2(A, k).exact == pytest.approx(_iterated_moments(A, k)[1], rel=1e-12)


@pytest.mark.parametrize("A", [Binomial(2, 0.35), Poisson(0.7)])
def test_moments_against_simulation(A):
    k = 3
    x = sample_iterated_thinning(k, A, RandomStream(21, 0), 400_000).astype(float)
    m1, m2, m3 = _iterated_moments(A, k)
    assert abs(x.mean() - m1) < 5 * x.std() / math.sqrt(x.size)
    assert abs((x**2).mean() - m2) < 5 * (x**2).std() / math.sqrt(x.size)
    assert abs((x**3).mean() - m3) < 5 * (x**3).std() / math.sqrt(x.size)
    assert exact_m3(A, k) == pytest.approx(m3)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 0.99), st.integers(1, 40))
def test_m2_bound_holds_for_bernoulli_above_half(p, k):
    assert exact_m2(Bernoulli(p), k).holds
