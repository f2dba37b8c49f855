import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heavybranch.heavy_rng import (
    Bernoulli,
    Binomial,
    Dirac,
    DiscretePareto,
    DistributionSpec,
    Geometric,
    ParameterError,
    Poisson,
    RandomStream,
    ZeroInflatedPareto,
    _pareto_tail_series,
    pgf_eval,
    pmf,
    pmf_array,
    raw_moment,
    sample,
    tail_gf,
    tail_prob,
    variance,
)


LIGHT = [Dirac(3), Bernoulli(0.3), Binomial(4, 0.2), Poisson(1.7), Geometric(0.4)]


@pytest.mark.parametrize(
    "factory, args",
    [
        (Bernoulli, (1.5,)),
        (Bernoulli, (-0.1,)),
        (Binomial, (-1, 0.5)),
        (Poisson, (-2.0,)),
        (Geometric, (0.0,)),
        (DiscretePareto, (0.0,)),
        (DiscretePareto, (1.0, 1.5)),
        (ZeroInflatedPareto, (1.2, 1.5)),
        (Dirac, (-1,)),
    ],
)
def test_invalid_parameters_rejected(factory, args):
    with pytest.raises(ParameterError):
        factory(*args)


def test_unknown_family_and_params_rejected():
    with pytest.raises(ParameterError):
        DistributionSpec("Cauchy", {"x": 1})
    with pytest.raises(ParameterError):
        DistributionSpec.from_dict({"family": "Poisson", "lam": 1.0, "extra": 2})


def test_dict_round_trip():
    for d in LIGHT + [DiscretePareto(0.8), ZeroInflatedPareto(0.3, 1.5)]:
        assert DistributionSpec.from_dict(d.to_dict()) == d


def test_discrete_pareto_tail_is_exact():
    d = DiscretePareto(1.0)
    assert tail_prob(d, 0) == 1.0
    assert tail_prob(d, 9) == pytest.approx(0.1)
    assert tail_prob(d, -3) == 1.0
    assert pmf(d, 0) == 0.0
    assert pmf(d, 1) == pytest.approx(0.5)


def test_pareto_sampler_matches_tail():
    d = DiscretePareto(0.8)
    x = sample(d, RandomStream(5, 0), 1_000_000)
    assert x.min() >= 1
    for n in (1, 10, 100, 1000):
        p = tail_prob(d, n)
        se = math.sqrt(p * (1 - p) / x.size)
        assert abs(np.mean(x > n) - p) < 4 * se


def test_zero_inflated_pareto():
    d = ZeroInflatedPareto(0.3, 1.5)
    x = sample(d, RandomStream(6, 0), 400_000)
    assert abs(np.mean(x == 0) - 0.7) < 4 * math.sqrt(0.21 / x.size)
    assert tail_prob(d, 4) == pytest.approx(0.3 * 5**-1.5)


def test_zip_mean_against_independent_series():
    # mean = sum_n P(X > n), summed with Euler-Maclaurin acceleration
    exact = mpmath.nsum(lambda n: 0.3 * (1 + n) ** -1.5, [0, mpmath.inf], method="euler-maclaurin")
    assert raw_moment(ZeroInflatedPareto(0.3, 1.5), 1) == pytest.approx(float(exact), abs=1e-9)
    assert raw_moment(ZeroInflatedPareto(0.3, 1.5), 1) == pytest.approx(0.7837126, abs=1e-7)


def test_pareto_moments_diverge_at_index():
    assert raw_moment(DiscretePareto(0.8), 1) == math.inf
    assert raw_moment(DiscretePareto(1.5), 2) == math.inf
    assert math.isfinite(raw_moment(DiscretePareto(2.5), 2))
    assert raw_moment(DiscretePareto(2.5), 3) == math.inf


def test_pareto_second_moment_against_series():
    a = 3.5
    exact = mpmath.nsum(lambda m: (m**2 - (m - 1) ** 2) * m**-a, [1, mpmath.inf], method="euler-maclaurin")
    assert raw_moment(DiscretePareto(a), 2) == pytest.approx(float(exact), rel=1e-10)


@pytest.mark.parametrize("dist", LIGHT)
def test_light_moments_against_pmf(dist):
    p = pmf_array(dist, 200)
    n = np.arange(201)
    for r in (1, 2, 3):
        assert raw_moment(dist, r) == pytest.approx(float(p @ n**r), rel=1e-9)
    assert variance(dist) == pytest.approx(float(p @ n**2 - (p @ n) ** 2), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("dist", LIGHT + [DiscretePareto(1.2), ZeroInflatedPareto(0.3, 1.5)])
def test_pgf_endpoints_and_pmf(dist):
    assert pgf_eval(dist, 1.0) == 1.0
    assert pgf_eval(dist, 0.0) == pytest.approx(pmf(dist, 0), abs=1e-12)
    s = 0.37
    direct = float(pmf_array(dist, 400) @ s ** np.arange(401))
    assert pgf_eval(dist, s) == pytest.approx(direct, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.8, 1.5, 2.5])
@pytest.mark.parametrize("s", [0.5, 0.9, 0.999, 0.99999])
def test_pareto_series_matches_polylog(alpha, s):
    ref = float(mpmath.polylog(alpha, s) / s)
    assert _pareto_tail_series(alpha, s) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("dist", LIGHT + [ZeroInflatedPareto(0.3, 1.5)])
def test_tail_gf_identity(dist):
    for s in (0.0, 0.3, 0.8, 0.99):
        assert tail_gf(dist, s) == pytest.approx((1 - pgf_eval(dist, s)) / (1 - s), rel=1e-9, abs=1e-12)
    assert tail_gf(dist, 1.0) == pytest.approx(raw_moment(dist, 1))


def test_pgf_domain():
    with pytest.raises(ParameterError):
        pgf_eval(Poisson(1.0), 1.5)


def test_streams_are_reproducible_and_distinct():
    a = sample(Poisson(3.0), RandomStream(1, 7), 100)
    b = sample(Poisson(3.0), RandomStream(1, 7), 100)
    c = sample(Poisson(3.0), RandomStream(1, 8), 100)
    d = sample(Poisson(3.0), RandomStream(2, 7), 100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_scalar_sample_is_int():
    assert isinstance(sample(Bernoulli(0.5), RandomStream(0, 0)), int)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(["Binomial", "Poisson", "Geometric", "ZIP"]),
    st.floats(0.05, 0.95),
    st.integers(0, 15),
)
def test_tail_equals_one_minus_cdf(family, p, n):
    dist = {
        "Binomial": lambda: Binomial(6, p),
        "Poisson": lambda: Poisson(5 * p),
        "Geometric": lambda: Geometric(p),
        "ZIP": lambda: ZeroInflatedPareto(p, 1.3),
    }[family]()
    cdf = float(pmf_array(dist, n).sum())
    assert tail_prob(dist, n) == pytest.approx(1.0 - cdf, abs=1e-12)
