"""Branching process with immigration: thinning, recursions and samplers.

The sum variant is the INAR-type recursion ``X_t = theta_t o X_{t-1} + B_t``
where ``theta_t o x`` is the sum of ``x`` i.i.d. offspring counts. The max
variant replaces the sum by ``max(theta_t o X'_{t-1}, B_t)``.

Everything here is vectorised over numpy arrays; thinning uses the closed
form of the compound law whenever the offspring family has one.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .heavy_rng import (
    DistributionSpec,
    ParameterError,
    RandomStream,
    as_generator,
    moments,
    prob_positive,
    raw_moment,
    sample,
    tail_gf,
    tail_index,
)

__all__ = [
    "ConfigError",
    "NonErgodicError",
    "QuadratureError",
    "ModelConfig",
    "PathSample",
    "ErgodicityReport",
    "thin",
    "iterated_thin",
    "step",
    "simulate_path",
    "coupled_paths",
    "sample_stationary_backward",
    "sample_iterated_thinning",
    "check_ergodicity",
    "backward_depth",
    "DEFAULT_BURN_IN",
]

DEFAULT_BURN_IN = 1000
BACKWARD_EPS = 1e-6
FW_DELTA = 1e-6

VARIANTS = ("sum", "max")
REGIMES = ("ModelI", "ModelII", "light")

# expansion of compound sums is processed in pieces of at most this many draws
_CHUNK = 1 << 22


class ConfigError(ValueError):
    """A model configuration violates its declared regime."""


class NonErgodicError(RuntimeError):
    """Raised when a sampler is asked to run a non-ergodic model."""

    def __init__(self, report: "ErgodicityReport"):
        self.report = report
        super().__init__(f"model is not ergodic: {report.describe()}")


class QuadratureError(RuntimeError):
    def __init__(self, message, report):
        self.report = report
        super().__init__(message)


@dataclass(frozen=True)
class ModelConfig:
    """Offspring law ``A``, immigration law ``B``, recursion variant, regime.

    ``regime`` may be None, in which case only ergodicity is required by the
    samplers. A declared regime is checked structurally on construction.
    """

    offspring: DistributionSpec
    immigration: DistributionSpec
    variant: str = "sum"
    regime: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.regime is not None and self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES} or null, got {self.regime!r}")
        if self.regime is not None:
            self._check_regime()

    @property
    def mu(self) -> float:
        return raw_moment(self.offspring, 1)

    def _check_regime(self):
        A, B = self.offspring, self.immigration
        mu = self.mu
        if self.regime == "ModelI":
            if not 0.0 < mu < 1.0:
                raise ConfigError(f"ModelI needs 0 < E(A) < 1, got {mu}")
            if B.family != "DiscretePareto":
                raise ConfigError("ModelI needs DiscretePareto immigration")
            a = B.alpha
            if not 0.0 < a < 2.0 or a == 1.0:
                raise ConfigError(f"ModelI needs immigration alpha in (0,2) minus {{1}}, got {a}")
            if math.isinf(raw_moment(A, 2)):
                raise ConfigError("ModelI needs E(A^2) < inf")
        elif self.regime == "ModelII":
            if A.family != "ZeroInflatedPareto":
                raise ConfigError("ModelII needs ZeroInflatedPareto offspring")
            if not 1.0 < A.alpha < 2.0:
                raise ConfigError(f"ModelII needs offspring alpha in (1,2), got {A.alpha}")
            if not 0.0 < mu < 1.0:
                raise ConfigError(f"ModelII needs 0 < E(A) < 1, got {mu}")
            if B.is_pareto and B.alpha != A.alpha:
                raise ConfigError("ModelII immigration must be light-tailed or Pareto with the offspring's alpha")
        else:
            if not mu < 1.0:
                raise ConfigError(f"light regime needs E(A) < 1, got {mu}")
            if math.isinf(raw_moment(A, 2)) or math.isinf(raw_moment(B, 2)):
                raise ConfigError("light regime needs finite second moments of A and B")

    @property
    def tail_ratio_c(self) -> float:
        """``lim P(B > x) / P(A > x)`` for ModelII configurations."""
        A, B = self.offspring, self.immigration
        if not B.is_pareto:
            return 0.0
        if B.alpha != A.alpha:
            return 0.0 if B.alpha > A.alpha else math.inf
        return prob_positive(B) / prob_positive(A)

    @property
    def driving_alpha(self) -> float:
        """Tail index of the heavier of ``A`` and ``B`` (``inf`` if both light)."""
        return min(tail_index(self.offspring), tail_index(self.immigration))

    def to_dict(self) -> dict:
        return {
            "offspring": self.offspring.to_dict(),
            "immigration": self.immigration.to_dict(),
            "variant": self.variant,
            "regime": self.regime,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        allowed = {"offspring", "immigration", "variant", "regime"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        for key in ("offspring", "immigration"):
            if key not in data:
                raise ConfigError(f"model.{key} is required")
        specs = {}
        for key in ("offspring", "immigration"):
            try:
                specs[key] = DistributionSpec.from_dict(data[key])
            except (ParameterError, TypeError, AttributeError) as exc:
                raise ConfigError(f"field 'model.{key}': {exc}") from exc
        A, B = specs["offspring"], specs["immigration"]
        return cls(A, B, data.get("variant", "sum"), data.get("regime"))


@dataclass
class PathSample:
    values: np.ndarray
    burn_in: int
    master_seed: int | None
    stream: int | None
    config: ModelConfig
    method: str = "cohort"

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("empty path")

    def __len__(self):
        return len(self.values)


@dataclass
class ErgodicityReport:
    mu: float
    log_moment_ok: bool
    fw_integral: float
    fw_endpoint_bound: float = 0.0
    ergodic: bool = field(init=False)

    def __post_init__(self):
        self.ergodic = bool(
            0.0 <= self.mu < 1.0 and self.log_moment_ok and math.isfinite(self.fw_integral)
        )

    def describe(self) -> str:
        return (
            f"mu={self.mu:.6g}, log_moment_ok={self.log_moment_ok}, "
            f"fw_integral={self.fw_integral:.6g}, ergodic={self.ergodic}"
        )

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "log_moment_ok": self.log_moment_ok,
            "fw_integral": self.fw_integral if math.isfinite(self.fw_integral) else "inf",
            "fw_endpoint_bound": self.fw_endpoint_bound,
            "ergodic": self.ergodic,
        }


# ---------------------------------------------------------------------------
# thinning


def _compound_sum(counts: np.ndarray, dist: DistributionSpec, gen) -> np.ndarray:
    """Per-entry sums of ``counts[i]`` i.i.d. draws of ``dist`` (the O(x) route)."""
    counts = np.asarray(counts, dtype=np.int64)
    out = np.zeros(counts.shape, dtype=np.int64)
    flat = counts.ravel()
    res = out.ravel()
    nz = np.flatnonzero(flat)
    if nz.size == 0:
        return out
    cum = np.cumsum(flat[nz])
    start = 0
    while start < nz.size:
        # take entries until the chunk budget is used (always at least one)
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _CHUNK, side="right"))
        stop = max(stop, start + 1)
        sel = nz[start:stop]
        c = flat[sel]
        total = int(c.sum())
        draws = sample(dist, gen, total)
        offsets = np.concatenate(([0], np.cumsum(c)[:-1]))
        res[sel] = np.add.reduceat(draws, offsets)
        start = stop
    return out


def _pareto_unit(dist: DistributionSpec) -> DistributionSpec:
    return DistributionSpec("DiscretePareto", {"alpha": dist.alpha, "c0": 1.0})


def thin(x, offspring: DistributionSpec, rng, method: str = "auto"):
    """``theta o x``: the sum of ``x`` i.i.d. copies of the offspring variable.

    Accepts a scalar or an integer array. ``method="auto"`` uses the compound
    law in closed form when there is one (Bernoulli, Binomial, Poisson,
    Dirac, Geometric -> negative binomial); Pareto families draw the number of
    nonzero offspring binomially and add their positive parts. ``"naive"``
    always sums ``x`` individual draws.
    """
    gen = as_generator(rng)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if np.any(xa < 0):
        raise ValueError("thinning needs nonnegative states")
    if method == "naive":
        out = _compound_sum(xa, offspring, gen)
    elif method == "auto":
        out = _thin_auto(xa, offspring, gen)
    else:
        raise ValueError(f"unknown thinning method {method!r}")
    return int(out[0]) if scalar else out


def _thin_auto(xa: np.ndarray, A: DistributionSpec, gen) -> np.ndarray:
    fam = A.family
    p = A.params
    if fam == "Dirac":
        return xa * p["value"]
    if fam == "Bernoulli":
        return gen.binomial(xa, p["p"]).astype(np.int64)
    if fam == "Binomial":
        return gen.binomial(xa * p["m"], p["p"]).astype(np.int64)
    if fam == "Poisson":
        return gen.poisson(xa * p["lam"]).astype(np.int64)
    out = np.zeros_like(xa)
    nz = np.flatnonzero(xa)
    if nz.size == 0:
        return out
    if fam == "Geometric":
        out[nz] = gen.negative_binomial(xa[nz], p["p"])
        return out
    # Pareto families: how many offspring are nonzero, then their sizes
    k = gen.binomial(xa[nz], prob_positive(A)).astype(np.int64)
    out[nz] = _compound_sum(k, _pareto_unit(A), gen)
    return out


def iterated_thin(x, offspring: DistributionSpec, k: int, rng):
    """``k``-fold iterated thinning of ``x`` (independent maps at each level)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    gen = as_generator(rng)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=np.int64)).copy()
    fam = offspring.family
    if k == 0:
        out = xa
    elif fam == "Bernoulli":
        out = gen.binomial(xa, offspring.p**k).astype(np.int64)
    elif fam == "Dirac":
        out = xa * offspring.value**k
    else:
        out = xa
        alive = np.flatnonzero(out)
        for _ in range(k):
            if alive.size == 0:
                break
            vals = _thin_auto(out[alive], offspring, gen)
            out[alive] = vals
            alive = alive[vals > 0]
    return int(out[0]) if scalar else out


def sample_iterated_thinning(k: int, offspring: DistributionSpec, rng, size=None):
    """Progeny after ``k`` generations of a single ancestor; ``k = 0`` gives 1."""
    n = 1 if size is None else size
    out = iterated_thin(np.ones(n, dtype=np.int64), offspring, k, rng)
    return int(out[0]) if size is None else out


def step(state: int, config: ModelConfig, rng) -> int:
    """One transition of the chain from ``state``."""
    gen = as_generator(rng)
    survivors = thin(int(state), config.offspring, gen)
    b = sample(config.immigration, gen)
    if config.variant == "sum":
        return survivors + b
    return max(survivors, b)


# ---------------------------------------------------------------------------
# ergodicity


def _endpoint_bound(B: DistributionSpec, mu: float, delta: float) -> float:
    # on [1-delta, 1]: f(s) - s >= (1-mu)(1-s), and (1-g(s))/(1-s) = sum_n P(B>n) s^n
    mean_b = raw_moment(B, 1)
    if math.isfinite(mean_b):
        return delta * mean_b / (1.0 - mu)
    # Pareto with alpha <= 1: sum_m c m^-(alpha+1) min(1, delta m), M = 1/delta
    c = prob_positive(B)
    a = B.alpha
    M = 1.0 / delta
    head = 1.0 + (math.log(M) if a == 1.0 else (M ** (1.0 - a) - 1.0) / (1.0 - a))
    tail = M ** (-a - 1.0) + M ** (-a) / a
    return c * (delta * head + tail) / (1.0 - mu)


def check_ergodicity(config: ModelConfig, delta: float = FW_DELTA) -> ErgodicityReport:
    """Foster-Williamson check: ``int_0^1 (1 - g(s)) / (f(s) - s) ds < inf``.

    Results are memoised per ``(config, delta)``; configs are immutable. The integrand is evaluated as ``T_B(s) / (1 - T_A(s))`` with ``T`` the
    tail generating function, which avoids the 0/0 at ``s = 1``. Quadrature
    covers ``[0, 1 - delta]``; the last piece is replaced by an analytic upper
    bound. For ``mu >= 1`` the integral diverges unless ``B = 0``.
    """
    return _check_ergodicity(config, float(delta))


@functools.lru_cache(maxsize=256)
def _check_ergodicity(config: ModelConfig, delta: float) -> ErgodicityReport:
    A, B = config.offspring, config.immigration
    mu, _, log_ok_a = moments(A)
    _, _, log_ok_b = moments(B)
    log_ok = log_ok_a and log_ok_b
    if prob_positive(B) == 0.0:
        return ErgodicityReport(mu, log_ok, 0.0, 0.0)
    if not mu < 1.0:
        return ErgodicityReport(mu, log_ok, math.inf, 0.0)

    def integrand(s):
        return tail_gf(B, s) / (1.0 - tail_gf(A, s))

    value, abserr, info, *rest = integrate.quad(
        integrand, 0.0, 1.0 - delta, limit=200, epsabs=1e-10, epsrel=1e-10, full_output=1
    )
    bound = _endpoint_bound(B, mu, delta)
    if rest and not (abserr < 1e-6 * max(1.0, abs(value))):
        partial = ErgodicityReport(mu, log_ok, math.nan, bound)
        raise QuadratureError(f"Foster-Williamson quadrature failed: {rest[0]}", partial)
    return ErgodicityReport(mu, log_ok, value + bound, bound)


def _require_ergodic(config: ModelConfig) -> ErgodicityReport:
    report = check_ergodicity(config)
    if not report.ergodic:
        raise NonErgodicError(report)
    return report


# ---------------------------------------------------------------------------
# forward simulation


def _cohort_path(config: ModelConfig, total: int, gen) -> np.ndarray:
    """Chain started at 0, built cohort by cohort.

    Immigrants arriving at time ``s`` and their descendants form independent
    Galton-Watson families, so ``X_t`` is the sum over ``s <= t`` of the size
    of family ``s`` in generation ``t - s``. All living families are advanced
    one generation at a time with a single vectorised thinning call.
    """
    A = config.offspring
    x = sample(config.immigration, gen, total)
    idx = np.flatnonzero(x)
    z = x[idx]
    k = 0
    while idx.size:
        k += 1
        keep = idx + k < total
        idx, z = idx[keep], z[keep]
        if idx.size == 0:
            break
        z = _thin_auto(z, A, gen)
        alive = z > 0
        idx, z = idx[alive], z[alive]
        x[idx + k] += z
    return x


def _loop_path(config: ModelConfig, total: int, gen) -> np.ndarray:
    x = np.empty(total, dtype=np.int64)
    state = 0
    for t in range(total):
        state = step(state, config, gen)
        x[t] = state
    return x


def simulate_path(
    config: ModelConfig,
    length: int,
    burn_in: int = DEFAULT_BURN_IN,
    seed: int = 0,
    stream: int = 0,
    method: str = "auto",
    rng=None,
) -> PathSample:
    """Trajectory of the chain started at 0 with the first ``burn_in`` states dropped.

    ``method="cohort"`` (the default for the sum variant) advances whole
    immigrant families at once; ``"loop"`` steps the recursion one time
    point at a time and is the only option for the max variant. Both give
    the same joint law. Pass ``rng`` to draw from an existing stream instead
    of ``(seed, stream)``.
    """
    if length < 1 or burn_in < 0:
        raise ValueError("need length >= 1 and burn_in >= 0")
    _require_ergodic(config)
    if method == "auto":
        method = "cohort" if config.variant == "sum" else "loop"
    if method == "cohort" and config.variant != "sum":
        raise ValueError("cohort simulation only applies to the sum variant")
    if rng is None:
        rng = RandomStream(seed, stream)
    else:
        seed = getattr(rng, "master_seed", None)
        stream = getattr(rng, "stream", None)
    gen = as_generator(rng)
    total = length + burn_in
    if method == "cohort":
        x = _cohort_path(config, total, gen)
    elif method == "loop":
        x = _loop_path(config, total, gen)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PathSample(x[burn_in:].copy(), burn_in, seed, stream, config, method)


def coupled_paths(config: ModelConfig, length: int, seed: int = 0, stream: int = 0):
    """Sum and max chains driven by the same offspring and immigration draws.

    At every step the max chain's survivors are the offspring of the first
    ``X'_{t-1}`` individuals of the sum chain, so ``X'_t <= X_t`` pathwise.
    Returns ``(sum_path, max_path)`` as arrays, both started at 0.
    """
    gen = as_generator(RandomStream(seed, stream))
    A, B = config.offspring, config.immigration
    xs = np.empty(length, dtype=np.int64)
    xm = np.empty(length, dtype=np.int64)
    s = m = 0
    for t in range(length):
        tm = thin(m, A, gen)
        ts = tm + thin(s - m, A, gen)
        b = sample(B, gen)
        s, m = ts + b, max(tm, b)
        xs[t], xm[t] = s, m
    return xs, xm


# ---------------------------------------------------------------------------
# backward (stationary) sampling


def backward_depth(mu: float, eps: float = BACKWARD_EPS) -> tuple[int, int]:
    """Initial depth ``K`` and look-back window ``L`` of the backward sampler."""
    if mu <= 0.0:
        return 0, 0
    K = math.ceil(math.log(eps) / math.log(mu))
    L = math.ceil(math.log(10.0) / -math.log(mu))
    return max(K, L), L


def _sum_block(A, B, m, span, offset, L, gen):
    """Cohorts at depths ``offset .. offset+span-1`` for ``m`` samples.

    Horner form: running the chain ``span`` steps from zero yields the sum
    of the ``span`` most recent cohorts, each thinned by its own depth.
    Returns (total, deep) where ``deep`` is the part owed to the ``L``
    deepest cohorts of the block.
    """
    deep = np.zeros(m, dtype=np.int64)
    for _ in range(L):
        deep = _thin_auto(deep, A, gen) + sample(B, gen, m)
    rest = np.zeros(m, dtype=np.int64)
    for _ in range(span - L):
        deep = _thin_auto(deep, A, gen)
        rest = _thin_auto(rest, A, gen) + sample(B, gen, m)
    if offset:
        deep = iterated_thin(deep, A, offset, gen)
        rest = iterated_thin(rest, A, offset, gen)
    return rest + deep, deep


def _coupled_thin(u, v, A, gen):
    """Thin ``u`` and ``v`` with shared individuals (the smaller is a prefix)."""
    lo = np.minimum(u, v)
    t_lo = _thin_auto(lo, A, gen)
    t_hi = t_lo + _thin_auto(np.maximum(u, v) - lo, A, gen)
    return np.where(u <= v, t_lo, t_hi), np.where(u <= v, t_hi, t_lo)


def _max_chain_block(A, B, m, span, L, gen):
    deep = np.zeros(m, dtype=np.int64)
    for _ in range(L):
        deep = np.maximum(_thin_auto(deep, A, gen), sample(B, gen, m))
    rest = np.zeros(m, dtype=np.int64)
    for _ in range(span - L):
        deep, rest = _coupled_thin(deep, rest, A, gen)
        rest = np.maximum(rest, sample(B, gen, m))
    return np.maximum(rest, deep), deep


_MAX_DEPTH = 1 << 16


def _backward(config, depth, size, gen, max_form):
    A, B = config.offspring, config.immigration
    mu = config.mu
    if depth != "auto":
        K = int(depth)
        if K < 0:
            raise ValueError("depth must be >= 0")
        if config.variant == "sum":
            total, _ = _sum_block(A, B, size, K + 1, 0, 0, gen)
            return total, K
        if max_form == "chain":
            total, _ = _max_chain_block(A, B, size, K + 1, 0, gen)
            return total, K
        return _max_independent(A, B, size, K, 0, gen)[0], K

    K, L = backward_depth(mu)
    if config.variant == "sum":
        total, deep = _sum_block(A, B, size, K + 1, 0, L, gen)
        flagged = np.flatnonzero(deep)
        depth_used = K
        while flagged.size:
            # extend only the flagged samples by the next K+1 cohorts
            extra, deep = _sum_block(A, B, flagged.size, depth_used + 1, depth_used + 1, L, gen)
            total[flagged] += extra
            flagged = flagged[deep > 0]
            depth_used = 2 * depth_used + 1
            if depth_used > _MAX_DEPTH:
                raise RuntimeError("backward sampler did not settle; is the model ergodic?")
        return total, depth_used
    if max_form == "independent":
        return _max_independent(A, B, size, K, L, gen)
    # nested coupling cannot be extended per sample: redraw the batch deeper
    while True:
        total, deep = _max_chain_block(A, B, size, K + 1, L, gen)
        if not deep.any():
            return total, K
        K = 2 * K + 1
        if K > _MAX_DEPTH:
            raise RuntimeError("backward sampler did not settle; is the model ergodic?")


def _max_independent(A, B, size, K, L, gen):
    """``max_k C_k`` with every cohort thinned by its own independent maps."""
    res = np.zeros(size, dtype=np.int64)
    last_nonzero = np.full(size, -1, dtype=np.int64)
    active = np.arange(size)
    k = 0
    stop = K
    while True:
        c = iterated_thin(sample(B, gen, active.size), A, k, gen)
        res[active] = np.maximum(res[active], c)
        last_nonzero[active[c > 0]] = k
        if k >= stop:
            if L == 0:
                return res, stop
            # keep going only where one of the last L cohorts was nonzero
            active = active[last_nonzero[active] > stop - L]
            if active.size == 0:
                return res, stop
            stop = 2 * stop + 1
            if stop > _MAX_DEPTH:
                raise RuntimeError("backward sampler did not settle")
        k += 1


def sample_stationary_backward(
    config: ModelConfig, depth="auto", rng=None, size=None, max_form: str = "chain"
):
    """Draw from the stationary law through the backward series ``sum_k C_k``.

    ``C_k`` is the ``k``-fold iterated thinning of an independent immigration
    batch. With ``depth="auto"`` the series is cut at
    ``K = ceil(log(1e-6) / log(mu))`` and, for every draw whose last
    ``ceil(log(10) / -log(mu))`` terms were not all zero, extended by the
    next ``K + 1`` terms (so the depth doubles) until they are.

    For the max variant the default ``max_form="chain"`` takes the maximum
    over cohorts that share offspring along their common ancestry, which is
    the stationary law of the max recursion. ``"independent"`` uses
    independently thinned cohorts instead (same tail constants, different
    law). The chain form doubles the depth for the whole batch.
    """
    if rng is None:
        raise ValueError("an explicit random stream is required")
    _require_ergodic(config)
    if max_form not in ("chain", "independent"):
        raise ValueError("max_form must be 'chain' or 'independent'")
    gen = as_generator(rng)
    n = 1 if size is None else int(size)
    out, _ = _backward(config, depth, n, gen, max_form)
    return int(out[0]) if size is None else out
