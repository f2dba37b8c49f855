"""Batch command line: ``heavybranch <subcommand> --config FILE [--seed N] [--out DIR] [--threads K]``.

Every experiment is a pure function of its JSON config and seed. Each run
writes ``<out>/<name>.csv`` and ``<out>/<name>.summary.json``; ``name``
defaults to the experiment. The summary's ``created`` field is the only
value that changes between identical reruns.

Exit codes: 0 success, 2 configuration error (including non-ergodic
models), 3 runtime or statistical-guard error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .extremes import (
    ExtremesReport,
    anticlustering_profile,
    block_maxima,
    cluster_size_fit,
    decluster,
    default_block_length,
    default_run_gap,
    extremal_index_estimate,
    frechet_gof,
    intercluster_exponential_check,
    tail_process_profile,
    theoretical_extremal_index,
)
from .heavy_rng import ParameterError, RandomStream, sample
from .pgf_oracle import (
    stationary_long_run_variance,
    stationary_moments,
    stationary_pgf,
    stationary_pmf_bruteforce,
)
from .process_core import (
    ConfigError,
    ModelConfig,
    NonErgodicError,
    check_ergodicity,
    sample_stationary_backward,
    simulate_path,
    thin,
)
from .sums_limits import (
    batch_means_variance,
    long_run_variance,
    partial_sum_replicates,
    stable_diagnostics,
)
from .tail_analysis import compound_ratio_curve, norming_sequence, tail_report, theoretical_tail_scale

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

EXPERIMENTS = ("simulate", "oracle", "tails", "extremes", "sums", "compound")

# every tunable with its default; None means "derived from the other sizes"
PARAMS = {
    "simulate": {"n": 10_000, "burn_in": 1000, "method": "auto", "batch": None},
    "oracle": {"state_cap": 64, "pgf_depth": 60, "tol": 1e-9, "n": 0, "burn_in": 1000,
               "pgf_points": [0.0, 0.25, 0.5, 0.75]},
    "tails": {"n": 1_000_000, "sampler": "backward", "chunk": 1_000_000, "burn_in": 1000, "k_order": None},
    "compound": {"reps": 1_000_000, "chunk": 1_000_000},
    "extremes": {"n": 10_000_000, "burn_in": 1000, "quantile": 0.999, "norming_n": 10_000,
                 "frechet_blocks": 0, "chunk": 10_000_000, "run_gap": None, "block_len": None,
                 "max_lag": 4, "anticluster_r": None},
    "sums": {"n": 10_000, "reps": 1000, "repeats": 1, "burn_in": 1000, "lrv_length": 1_000_000,
             "max_lag": None},
}

TOP_KEYS = {"experiment", "model", "seed", "params", "quantiles", "output"}
OUTPUT_KEYS = {"dir", "name"}

# disjoint stream ranges per role, so no two draws in one experiment share a stream
STREAM_STRIDE = 1 << 32
_ROLES = {"main": 0, "aux": 1, "double": 2, "frechet": 3, "lrv": 4}


def seed_streams(master_seed: int, replicate_count: int, role: str = "main") -> list[tuple[int, int]]:
    """``(master_seed, stream)`` pairs for replicates ``0..replicate_count-1`` of one role.

    Streams are ``role_index * 2^32 + i``, so the assignment is injective
    across roles and replicates and depends on nothing but its arguments.
    """
    if replicate_count < 1:
        raise ValueError("replicate_count must be >= 1")
    base = _ROLES[role] * STREAM_STRIDE
    return [(int(master_seed), base + i) for i in range(replicate_count)]


@dataclass
class ExperimentConfig:
    experiment: str
    model: ModelConfig
    seed: int
    params: dict
    quantiles: tuple = (0.99, 0.999, 0.9999)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, seed_override: int | None = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("experiment", "model"):
            if key not in data:
                raise ConfigError(f"missing required field '{key}'")
        exp = data["experiment"]
        if exp not in EXPERIMENTS:
            raise ConfigError(f"field 'experiment' must be one of {EXPERIMENTS}, got {exp!r}")
        seed = seed_override if seed_override is not None else data.get("seed")
        if seed is None:
            raise ConfigError("missing required field 'seed'")
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"field 'seed' must be a non-negative integer, got {seed!r}")
        try:
            model = ModelConfig.from_dict(data["model"])
        except (ParameterError, TypeError, KeyError) as exc:
            raise ConfigError(f"field 'model': {exc}") from exc
        params = _check_params(exp, data.get("params", {}))
        qs = data.get("quantiles", cls.quantiles)
        if not isinstance(qs, (list, tuple)) or not qs:
            raise ConfigError("field 'quantiles' must be a non-empty list")
        for q in qs:
            if isinstance(q, bool) or not isinstance(q, (int, float)) or not 0.0 < q < 1.0:
                raise ConfigError(f"quantile {q!r} outside (0, 1)")
        if list(qs) != sorted(set(qs)):
            raise ConfigError("field 'quantiles' must be strictly increasing")
        if "quantile" in params and not 0.0 < params["quantile"] < 1.0:
            raise ConfigError("field 'params.quantile' outside (0, 1)")
        out = data.get("output", {})
        if not isinstance(out, dict) or set(out) - OUTPUT_KEYS:
            raise ConfigError(f"field 'output' accepts only {sorted(OUTPUT_KEYS)}")
        return cls(exp, model, seed, params, tuple(float(q) for q in qs), dict(out))

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model.to_dict(),
            "seed": self.seed,
            "params": dict(self.params),
            "quantiles": list(self.quantiles),
            "output": dict(self.output),
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def name(self) -> str:
        return self.output.get("name", self.experiment)


def _check_params(exp: str, given) -> dict:
    if not isinstance(given, dict):
        raise ConfigError("field 'params' must be an object")
    defaults = PARAMS[exp]
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown params for '{exp}': {sorted(unknown)}")
    out = dict(defaults)
    for key, val in given.items():
        ref = defaults[key]
        is_int = isinstance(val, int) and not isinstance(val, bool)
        if ref is None:
            ok = val is None or is_int
        elif isinstance(ref, float):
            ok = is_int or isinstance(val, float)
        elif isinstance(ref, int):
            ok = is_int
        else:
            ok = isinstance(val, type(ref))
        if not ok:
            want = "integer or null" if ref is None else type(ref).__name__
            raise ConfigError(f"field 'params.{key}' must be {want}, got {val!r}")
        if (is_int or isinstance(val, float)) and val < 0:
            raise ConfigError(f"field 'params.{key}' must be >= 0")
        out[key] = val
    return out


def load_config(path, seed_override=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data, seed_override)


# ---------------------------------------------------------------------------
# output


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _num(v) for v in row])
    return buf.getvalue()


def json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_outputs(out_dir, name: str, csv_text: str, summary: dict) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    json_path = out / f"{name}.summary.json"
    csv_path.write_text(csv_text, encoding="utf-8", newline="")
    json_path.write_text(json.dumps(json_safe(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


# ---------------------------------------------------------------------------
# experiments; each returns (csv_text, result_dict, digest)


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _chunks(total, chunk):
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def run_simulate(cfg: ExperimentConfig, threads: int = 1):
    p = cfg.params
    path = simulate_path(cfg.model, p["n"], p["burn_in"], cfg.seed, seed_streams(cfg.seed, 1)[0][1], p["method"])
    x = path.values
    csv_text = rows_to_csv(("t", "x"), enumerate(x.tolist()))
    res = {"length": int(x.size), "mean": float(x.mean()), "variance": float(x.var()), "max": int(x.max())}
    if cfg.model.variant == "sum" and x.size >= 100:
        xf = x.astype(np.float64)
        res["mean_se"] = math.sqrt(batch_means_variance(xf, p["batch"]) / x.size)
        res["variance_se"] = math.sqrt(batch_means_variance((xf - xf.mean()) ** 2, p["batch"]) / x.size)
        if cfg.model.mu < 1:
            mean, var = stationary_moments(cfg.model)
            res["theory_mean"], res["theory_variance"] = mean, var
    return csv_text, res, f"simulated {x.size} steps, mean {res['mean']:.6g}"


def run_oracle(cfg: ExperimentConfig, threads: int = 1):
    p = cfg.params
    orc = stationary_pmf_bruteforce(cfg.model, p["state_cap"], p["tol"], p["pgf_depth"])
    pgf_rows = []
    for s in p["pgf_points"]:
        a, b = orc.pgf(s), stationary_pgf(cfg.model, s, p["pgf_depth"])
        pgf_rows.append({"s": s, "pmf_pgf": a, "product_pgf": b, "abs_diff": abs(a - b)})
    res = {"mass_deficit": orc.mass_deficit, "iterations": orc.iterations, "mean": orc.mean(),
           "variance": orc.variance(), "pgf": pgf_rows,
           "max_pgf_diff": max(r["abs_diff"] for r in pgf_rows)}
    emp = None
    if p["n"] > 0:
        path = simulate_path(cfg.model, p["n"], p["burn_in"], cfg.seed, seed_streams(cfg.seed, 1)[0][1])
        counts = np.bincount(path.values, minlength=orc.state_cap + 1)
        emp = counts[: orc.state_cap + 1] / path.values.size
        overflow = counts[orc.state_cap + 1 :].sum() / path.values.size
        res["simulation_tv"] = 0.5 * (float(np.abs(emp - orc.pmf).sum()) + overflow)
        res["simulation_n"] = p["n"]
    rows = ((k, orc.pmf[k], emp[k] if emp is not None else math.nan) for k in range(orc.state_cap + 1))
    csv_text = rows_to_csv(("k", "pmf", "empirical"), rows)
    digest = f"oracle pmf on 0..{orc.state_cap}, max pgf diff {res['max_pgf_diff']:.3g}"
    if emp is not None:
        digest += f", simulation TV {res['simulation_tv']:.4g}"
    return csv_text, res, digest


def stationary_draws(cfg: ExperimentConfig, n: int, chunk: int, threads: int = 1, sampler: str = "backward",
                     burn_in: int = 1000) -> np.ndarray:
    """``n`` stationary values in chunks, chunk ``i`` on its own stream.

    ``backward`` gives independent draws; ``forward`` concatenates
    independent path segments, each with its own burn-in.
    """
    sizes = _chunks(n, chunk)
    streams = seed_streams(cfg.seed, len(sizes))

    def one(i):
        seed, stream = streams[i]
        if sampler == "backward":
            return sample_stationary_backward(cfg.model, rng=RandomStream(seed, stream), size=sizes[i])
        return simulate_path(cfg.model, sizes[i], burn_in, seed, stream).values

    if sampler not in ("backward", "forward"):
        raise ConfigError(f"field 'params.sampler' must be backward or forward, got {sampler!r}")
    return np.concatenate(_map(one, range(len(sizes)), threads))


def run_tails(cfg: ExperimentConfig, threads: int = 1):
    p = cfg.params
    x = stationary_draws(cfg, p["n"], p["chunk"], threads, p["sampler"], p["burn_in"])
    rep = tail_report(x, cfg.model, cfg.quantiles, p["k_order"])
    res = rep.to_dict()
    mid = rep.ratio_curve[len(rep.ratio_curve) // 2]
    digest = (f"{rep.regime}: constant {rep.constant_theory:.6g}, ratio {mid.ratio:.4g} at q={mid.quantile}, "
              f"alpha_hat {rep.alpha_hat:.3g}")
    return rep.to_csv(), res, digest


def run_compound(cfg: ExperimentConfig, threads: int = 1):
    p = cfg.params
    if p["reps"] < 1_000_000:
        raise ConfigError("field 'params.reps' must be >= 1000000 for the compound check")
    sizes = _chunks(p["reps"], p["chunk"])
    streams = seed_streams(cfg.seed, len(sizes))

    def one(i):
        rs = RandomStream(*streams[i])
        return thin(sample(cfg.model.immigration, rs, sizes[i]), cfg.model.offspring, rs)

    s = np.concatenate(_map(one, range(len(sizes)), threads))
    probes = [float(v) for v in np.quantile(s, cfg.quantiles)]
    pts = compound_ratio_curve(s, cfg.model.mu, cfg.model.immigration, probes)
    cols = ("quantile", "x", "ratio", "se", "target", "reliable")
    rows = [(q, pt.x, pt.ratio, pt.se, pt.target, int(pt.reliable)) for q, pt in zip(cfg.quantiles, pts)]
    res = {"reps": p["reps"], "mu": cfg.model.mu, "probes": [dict(zip(cols, r)) for r in rows]}
    mid = rows[len(rows) // 2]
    return rows_to_csv(cols, rows), res, f"compound ratio {mid[2]:.4g} at q={mid[0]}"


def run_extremes(cfg: ExperimentConfig, threads: int = 1):
    p = cfg.params
    model = cfg.model
    mu = model.mu
    alpha, tail_c = theoretical_tail_scale(model)
    theta = theoretical_extremal_index(mu, alpha)
    seed, stream = seed_streams(cfg.seed, 1)[0]
    path = simulate_path(model, p["n"], p["burn_in"], seed, stream)
    x = path.values
    u = float(np.quantile(x, p["quantile"]))
    gap = p["run_gap"] or default_run_gap(x.size)
    blen = p["block_len"] or default_block_length(x.size)
    th_blocks = extremal_index_estimate(x, u, "blocks", blen)
    th_runs = extremal_index_estimate(x, u, "runs", gap)
    clusters = decluster(x, u, gap)
    fit = cluster_size_fit(clusters, mu, alpha)
    profile = tail_process_profile(x, p["quantile"], p["max_lag"], mu=mu)
    a_n = norming_sequence(p["norming_n"], alpha, tail_c)
    big = decluster(x, a_n, gap)
    inter_ks = intercluster_exponential_check(big, p["norming_n"], theta, 1.0, alpha)
    r_n = p["anticluster_r"] or int(math.floor(p["norming_n"] ** 0.4))
    anti = anticlustering_profile(x, a_n, r_n)
    extra = {"a_n": a_n, "norming_n": p["norming_n"], "run_gap": gap, "block_len": blen,
             "n_clusters_a_n": len(big), "r_n": r_n, "path_length": int(x.size)}
    frechet_ks = math.nan
    if p["frechet_blocks"] > 0:
        maxima = frechet_maxima(cfg, p["frechet_blocks"], p["norming_n"], p["chunk"], threads)
        frechet_ks = frechet_gof(maxima, a_n, theta, alpha)
        extra["frechet_blocks"] = int(maxima.size)
    rep = ExtremesReport(theta, th_blocks, th_runs, u, frechet_ks, fit, profile, inter_ks, anti, extra)
    digest = (f"theta {theta:.4g}: runs {th_runs:.4g}, blocks {th_blocks:.4g}, "
              f"mean cluster {fit.mean_size:.4g}")
    if p["frechet_blocks"] > 0:
        digest += f", Frechet KS {frechet_ks:.4g}"
    return rep.to_csv(), rep.to_dict(), digest


def frechet_maxima(cfg: ExperimentConfig, blocks: int, block_n: int, chunk: int, threads: int = 1) -> np.ndarray:
    """Maxima of ``blocks`` consecutive blocks of length ``block_n``.

    Blocks are cut from independent stationary paths of about ``chunk``
    steps (a whole number of blocks each), path ``i`` on its own stream.
    """
    per = max(1, chunk // block_n)
    counts = _chunks(blocks, per)
    streams = seed_streams(cfg.seed, len(counts), "frechet")

    def one(i):
        seed, stream = streams[i]
        path = simulate_path(cfg.model, counts[i] * block_n, cfg.params["burn_in"], seed, stream)
        return block_maxima(path, block_n)

    return np.concatenate(_map(one, range(len(counts)), threads))


def run_sums(cfg: ExperimentConfig, threads: int = 1):
    p = cfg.params
    model = cfg.model
    n, reps = p["n"], p["reps"]
    if model.regime in ("ModelI", "ModelII"):
        r1 = partial_sum_replicates(model, n, reps, cfg.seed, seed_streams(cfg.seed, 1)[0][1], p["burn_in"], threads)
        r2 = partial_sum_replicates(model, 2 * n, reps, cfg.seed, seed_streams(cfg.seed, 1, "double")[0][1],
                                    p["burn_in"], threads)
        d = stable_diagnostics(r1.normalized_sums, r2.normalized_sums)
        res = r1.to_dict()
        res.update({"alpha_driving": r1.alpha, "hill_index": d.hill_index, "hill_ci": list(d.hill_ci),
                    "self_similarity_ks": d.self_similarity_ks, "ks_band_99": d.ks_band_99,
                    "stable_like": d.stable_like, "scale_2n": r2.scale_used, "center_2n": r2.center_used})
        rows = [(n, i, v) for i, v in enumerate(r1.normalized_sums)]
        rows += [(2 * n, i, v) for i, v in enumerate(r2.normalized_sums)]
        digest = f"{r1.regime}: Hill {d.hill_index:.3g} (alpha {r1.alpha}), KS(n,2n) {d.self_similarity_ks:.4g}"
        return rows_to_csv(("n", "replicate", "normalized_sum"), rows), res, digest
    # gaussian regime: repeated normality checks against N(0, sigma_hat^2)
    rows, summary_rows = [], []
    for r in range(p["repeats"]):
        offset = r * reps
        lrv_seed, lrv_stream = seed_streams(cfg.seed, r + 1, "lrv")[r]
        lrv_path = simulate_path(model, p["lrv_length"], p["burn_in"], lrv_seed, lrv_stream)
        s2 = long_run_variance(lrv_path, p["max_lag"])
        rep = partial_sum_replicates(model, n, reps, cfg.seed, seed_streams(cfg.seed, 1)[0][1] + offset,
                                     p["burn_in"], threads)
        ks = stats.kstest(rep.normalized_sums, "norm", args=(0.0, math.sqrt(s2)))
        summary_rows.append({"repeat": r, "sigma2_hat": s2, "ks": float(ks.statistic),
                             "pvalue": float(ks.pvalue), "pass_95": bool(ks.pvalue > 0.05)})
        rows += [(r, i, v) for i, v in enumerate(rep.normalized_sums)]
    passes = sum(s["pass_95"] for s in summary_rows)
    res = {"regime": "gaussian", "n": n, "replicates": reps, "repeats": p["repeats"], "passes": passes,
           "pass_rate": passes / p["repeats"], "repeat_results": summary_rows,
           "theory_long_run_variance": _theory_lrv(model)}
    digest = f"gaussian: normality KS passed in {passes}/{p['repeats']} repeats"
    return rows_to_csv(("repeat", "replicate", "normalized_sum"), rows), res, digest


def _theory_lrv(model):
    if model.regime in ("ModelI", "ModelII"):
        return None
    return stationary_long_run_variance(model)


RUNNERS = {
    "simulate": run_simulate,
    "oracle": run_oracle,
    "tails": run_tails,
    "compound": run_compound,
    "extremes": run_extremes,
    "sums": run_sums,
}


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1):
    """Run one experiment and write its CSV and JSON summary; returns ``(csv_path, json_path, digest)``."""
    report = check_ergodicity(cfg.model)
    if not report.ergodic:
        raise NonErgodicError(report)
    csv_text, result, digest = RUNNERS[cfg.experiment](cfg, threads)
    summary = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "ergodicity": report.to_dict(),
        "result": result,
        "digest": digest,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    csv_path, json_path = write_outputs(out_dir, cfg.name, csv_text, summary)
    return csv_path, json_path, digest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heavybranch", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=EXPERIMENTS + ("validate-config",))
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=None, help="output directory (default: config output.dir or '.')")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for replicates")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        if args.subcommand != "validate-config" and cfg.experiment != args.subcommand:
            raise ConfigError(f"config experiment is '{cfg.experiment}', subcommand is '{args.subcommand}'")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        report = check_ergodicity(cfg.model)
        if not report.ergodic:
            raise NonErgodicError(report)
        if args.subcommand == "validate-config":
            print(f"config ok: {cfg.experiment}, {report.describe()}")
            return EXIT_OK
        out_dir = args.out or cfg.output.get("dir", ".")
        _, _, digest = run_experiment(cfg, out_dir, args.threads)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonErgodicError as exc:
        print(f"config error: model not ergodic: {json.dumps(json_safe(exc.report.to_dict()))}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(digest)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
