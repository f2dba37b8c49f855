"""Acceptance criteria at full size.

Each test prints one ``PASS``/``FAIL`` line and adds it to the table shown
at the end of the pytest run. The whole module takes about twenty minutes
on one core, most of it in the gaussian partial-sum repeats and the reruns
of the determinism check.

Run on its own with ``pytest tests/test_acceptance.py -s`` or
``python3 tests/test_acceptance.py``.
"""
import json
import math
import sys

import mpmath
import numpy as np
import pytest

from heavybranch.cli import ExperimentConfig, run_experiment
from heavybranch.heavy_rng import Bernoulli, Binomial, Geometric, Poisson
from heavybranch.pgf_oracle import exact_m2, m3_upper_bound
from heavybranch.tail_analysis import model1_tail_constant

pytestmark = pytest.mark.slow

SEED = 2024

BERN = lambda p: {"family": "Bernoulli", "p": p}
POIS = lambda lam: {"family": "Poisson", "lam": lam}
PARETO = lambda a: {"family": "DiscretePareto", "alpha": a, "c0": 1.0}
MODEL_I = {"offspring": BERN(0.5), "immigration": PARETO(0.8), "regime": "ModelI"}
MODEL_I_15 = {"offspring": BERN(0.5), "immigration": PARETO(1.5), "regime": "ModelI"}
MODEL_II = {"offspring": {"family": "ZeroInflatedPareto", "q": 0.3, "alpha": 1.5, "c0": 1.0},
            "immigration": POIS(0.5), "regime": "ModelII"}

EXPERIMENTS = {
    "tails_model1": {"experiment": "tails", "model": MODEL_I, "params": {"n": 10_000_000}},
    "compound": {"experiment": "compound", "model": MODEL_I, "params": {"reps": 10_000_000}},
    "tails_model2": {"experiment": "tails", "model": MODEL_II, "params": {"n": 10_000_000}},
    "oracle": {"experiment": "oracle", "model": {"offspring": BERN(0.5), "immigration": BERN(0.5)},
               "params": {"n": 1_000_000, "state_cap": 40}},
    "simulate_bern_pois": {"experiment": "simulate", "model": {"offspring": BERN(0.5), "immigration": POIS(1.0)},
                           "params": {"n": 1_000_000}},
    "simulate_pois_geom": {"experiment": "simulate",
                           "model": {"offspring": POIS(0.3), "immigration": {"family": "Geometric", "p": 0.5}},
                           "params": {"n": 1_000_000}},
    "extremes": {"experiment": "extremes", "model": MODEL_I,
                 "params": {"n": 10_000_000, "frechet_blocks": 10_000, "max_lag": 4}},
    "sums_gaussian": {"experiment": "sums", "model": {"offspring": BERN(0.5), "immigration": POIS(1.0)},
                      "params": {"n": 100_000, "reps": 500, "repeats": 50}},
    "sums_alpha08": {"experiment": "sums", "model": MODEL_I, "params": {"n": 10_000, "reps": 1000}},
    "sums_alpha15": {"experiment": "sums", "model": MODEL_I_15, "params": {"n": 10_000, "reps": 1000}},
}


def config_for(name):
    data = dict(EXPERIMENTS[name], seed=SEED, output={"name": name})
    return ExperimentConfig.from_dict(json.loads(json.dumps(data)))


class Runs:
    """Runs each experiment at most once per output root and caches the result."""

    def __init__(self, root):
        self.root = root
        self.cache = {}

    def get(self, name, rerun=False):
        key = (name, rerun)
        if key not in self.cache:
            out = self.root / ("rerun" if rerun else "first")
            csv_path, json_path, digest = run_experiment(config_for(name), out)
            self.cache[key] = (csv_path.read_bytes(), json.loads(json_path.read_text())["result"], digest)
        return self.cache[key]

    def result(self, name):
        return self.get(name)[1]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def verdict(log, label, ok, detail):
    log.append((label, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, detail


def probe(result, q, key="empirical_ratio"):
    return next(p[key] for p in result["probes"] if p["quantile"] == q)


def test_criterion_01_model1_tail_constant(runs, acceptance_log):
    res = runs.result("tails_model1")
    ratio = probe(res, 0.999)
    target = 2.34889
    ok = abs(ratio / target - 1) <= 0.15 and abs(res["constant_theory"] - model1_tail_constant(0.5, 0.8)) < 1e-12
    verdict(acceptance_log, "criterion 1", ok,
            f"ratio {ratio:.4f} at q=0.999, band {target}*(1+-0.15), computed constant {res['constant_theory']:.7f}")


def test_criterion_02_compound_sum(runs, acceptance_log):
    res = runs.result("compound")
    ratio = probe(res, 0.999, "ratio")
    verdict(acceptance_log, "criterion 2", 0.85 <= ratio <= 1.15, f"ratio {ratio:.4f} at q=0.999, band [0.85, 1.15]")


def test_criterion_03_model2_tail_constant(runs, acceptance_log):
    res = runs.result("tails_model2")
    ratio, target = probe(res, 0.999), res["constant_theory"]
    # offspring mean from the exact series sum_n P(A > n)
    mu = float(mpmath.nsum(lambda n: 0.3 * (1 + n) ** -1.5, [0, mpmath.inf], method="euler-maclaurin"))
    ok = mu < 1 and abs(ratio / target - 1) <= 0.20
    verdict(acceptance_log, "criterion 3", ok, f"ratio {ratio:.4f} vs {target:.5f} (+-20%), mu {mu:.7f}")


def geometric_with_mean(m):
    return Geometric(1.0 / (1.0 + m))


M2_GRID = {
    "Bernoulli": Bernoulli,
    "Poisson": Poisson,
    "Geometric": geometric_with_mean,
}


def m2_table():
    return [(fam, mu, k, r.exact, r.bound, r.holds)
            for fam, make in M2_GRID.items() for mu in (0.5, 0.7, 0.9)
            for k in range(2, 21) for r in [exact_m2(make(mu), k)]]


def m3_table():
    laws = {"Bernoulli": Bernoulli, "Binomial": lambda mu: Binomial(3, mu / 3)}
    return [(fam, mu, k, r.exact, r.bound, r.holds)
            for fam, make in laws.items() for mu in (0.5, 0.7, 0.9)
            for k in range(2, 11) for r in [m3_upper_bound(make(mu), k)]]


def test_criterion_04_m2_bound(acceptance_log):
    rows = m2_table()
    bad = [r for r in rows if not r[3] <= r[4]]
    slack = min(r[4] - r[3] for r in rows)
    verdict(acceptance_log, "criterion 4", not bad, f"{len(rows)} cases, {len(bad)} violations, min slack {slack:.3g}")


def test_criterion_05_m3_bound(acceptance_log):
    rows = m3_table()
    bad = [r for r in rows if not r[3] <= r[4]]
    verdict(acceptance_log, "criterion 5", not bad, f"{len(rows)} cases, {len(bad)} violations")


def test_criterion_06_oracle_equivalence(runs, acceptance_log):
    res = runs.result("oracle")
    ok = res["max_pgf_diff"] < 1e-6 and res["simulation_tv"] < 0.005
    verdict(acceptance_log, "criterion 6", ok,
            f"max pgf diff {res['max_pgf_diff']:.2e}, simulation TV {res['simulation_tv']:.5f}")


def test_criterion_07_stationary_moments(runs, acceptance_log):
    parts, ok = [], True
    for name in ("simulate_bern_pois", "simulate_pois_geom"):
        r = runs.result(name)
        zm = (r["mean"] - r["theory_mean"]) / r["mean_se"]
        zv = (r["variance"] - r["theory_variance"]) / r["variance_se"]
        ok &= abs(zm) < 4 and abs(zv) < 4
        parts.append(f"{name}: mean z {zm:+.2f}, variance z {zv:+.2f}")
    verdict(acceptance_log, "criterion 7", ok, "; ".join(parts))


def test_criterion_08_extremal_index(runs, acceptance_log):
    r = runs.result("extremes")
    target = 0.42566
    ok = abs(r["theta_runs"] - target) <= 0.1 and abs(r["theta_blocks"] - target) <= 0.1
    verdict(acceptance_log, "criterion 8", ok,
            f"runs {r['theta_runs']:.4f}, blocks {r['theta_blocks']:.4f}, target {target} +- 0.1")


def test_criterion_09_frechet_maxima(runs, acceptance_log):
    r = runs.result("extremes")
    ks = r["frechet_ks"]
    ok = r["frechet_blocks"] == 10_000 and ks < 0.03
    verdict(acceptance_log, "criterion 9", ok, f"KS {ks:.4f} over {r['frechet_blocks']} blocks of 10^4, a_n {r['a_n']:.1f}")


def test_criterion_10_cluster_sizes(runs, acceptance_log):
    c = runs.result("extremes")["cluster_sizes"]
    target = 1.0 / (1.0 - 0.5**0.8)
    ok = abs(c["mean_size"] / target - 1) <= 0.15 and c["pvalue"] > 0.01
    verdict(acceptance_log, "criterion 10", ok,
            f"mean size {c['mean_size']:.4f} vs {target:.4f}, chi2 p {c['pvalue']:.3f}, {c['n_clusters']} clusters")


def test_criterion_11_tail_process(runs, acceptance_log):
    prof = runs.result("extremes")["tail_profile"]
    rows = [(t, med, tgt) for t, med, tgt in prof if 1 <= t <= 4]
    ok = len(rows) == 4 and all(abs(med / tgt - 1) <= 0.2 for _, med, tgt in rows)
    verdict(acceptance_log, "criterion 11", ok,
            ", ".join(f"t={t}: {med:.4f}/{tgt:.4f}" for t, med, tgt in rows))


def test_criterion_12_anticlustering(runs, acceptance_log):
    prof = np.array(runs.result("extremes")["anticlustering"])
    ok = prof.size >= 20 and bool(np.all(np.diff(prof) <= 0)) and prof[0] > prof[19] and prof[19] < 0.1
    verdict(acceptance_log, "criterion 12", ok, f"m=1: {prof[0]:.4f}, m=20: {prof[19]:.4f}, r_n {prof.size}")


def test_criterion_13a_gaussian_sums(runs, acceptance_log):
    r = runs.result("sums_gaussian")
    ok = r["repeats"] == 50 and r["passes"] >= 45
    verdict(acceptance_log, "criterion 13a", ok, f"{r['passes']}/50 repeats pass KS at 95%, n {r['n']}")


def test_criterion_13b_stable_sums(runs, acceptance_log):
    parts, ok = [], True
    for name, alpha in (("sums_alpha08", 0.8), ("sums_alpha15", 1.5)):
        r = runs.result(name)
        this = abs(r["hill_index"] - alpha) <= 0.2 and r["self_similarity_ks"] < r["ks_band_99"]
        ok &= this
        parts.append(f"alpha {alpha}: Hill {r['hill_index']:.3f}, KS {r['self_similarity_ks']:.4f} "
                     f"(band {r['ks_band_99']:.4f})")
    verdict(acceptance_log, "criterion 13b", ok, "; ".join(parts))


def test_criterion_14_determinism(runs, acceptance_log):
    differing = [name for name in EXPERIMENTS if runs.get(name)[0] != runs.get(name, rerun=True)[0]]
    if m2_table() != m2_table() or m3_table() != m3_table():
        differing.append("moment bounds")
    verdict(acceptance_log, "criterion 14", not differing,
            f"{len(EXPERIMENTS)} experiments rerun, byte-identical CSV" if not differing
            else f"CSV differs for {differing}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
