"""Nonnegative-integer distribution families and seeded random streams.

Every family used for the offspring variable ``A`` and the immigration
variable ``B`` is described by an immutable :class:`DistributionSpec`.
The module answers exact analytic queries (tail, pgf, moments) and draws
samples from a :class:`RandomStream`.

The discrete Pareto family is defined through its tail,

    P(X > n) = c0 * (1 + n) ** -alpha,   n = 0, 1, 2, ...

so that its slowly varying part is the constant ``c0`` and every
theoretical tail ratio downstream is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import special, stats

__all__ = [
    "ParameterError",
    "DistributionSpec",
    "RandomStream",
    "Dirac",
    "Bernoulli",
    "Binomial",
    "Poisson",
    "Geometric",
    "DiscretePareto",
    "ZeroInflatedPareto",
    "as_generator",
    "sample",
    "tail_prob",
    "pmf",
    "pmf_array",
    "pgf_eval",
    "moments",
    "raw_moment",
    "tail_index",
    "PGF_TOL",
    "PARETO_CAP",
    "variance",
    "tail_gf",
    "prob_positive",
]

#: Truncation error bound for series-evaluated pgfs.
PGF_TOL = 1e-12

#: Pareto draws are capped here to stay inside int64. The probability of
#: reaching the cap is c0 * 2**(-62 * alpha), i.e. below 1e-14 for alpha >= 0.5.
PARETO_CAP = 2**62

# above this many series terms the pgf of a Pareto family switches to the
# polylogarithm identity sum_{n>=0} (1+n)^-a s^n = Li_a(s) / s
_MAX_SERIES_TERMS = 1 << 22

_FAMILY_PARAMS = {
    "Dirac": ("value",),
    "Bernoulli": ("p",),
    "Binomial": ("m", "p"),
    "Poisson": ("lam",),
    "Geometric": ("p",),
    "DiscretePareto": ("alpha", "c0"),
    "ZeroInflatedPareto": ("q", "alpha", "c0"),
}
_INTEGER_PARAMS = {"value", "m"}


class ParameterError(ValueError):
    """Invalid distribution parameters or evaluation domain."""


@dataclass(frozen=True)
class DistributionSpec:
    """A named nonnegative-integer distribution with its parameters.

    Use the factory functions (:func:`Bernoulli`, :func:`DiscretePareto`, ...)
    or :meth:`from_dict` rather than building the params mapping by hand.
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _FAMILY_PARAMS:
            raise ParameterError(f"unknown distribution family {self.family!r}")
        expected = set(_FAMILY_PARAMS[self.family])
        got = set(self.params)
        if got != expected:
            raise ParameterError(
                f"{self.family} expects parameters {sorted(expected)}, got {sorted(got)}"
            )
        clean = {}
        for name in _FAMILY_PARAMS[self.family]:
            value = self.params[name]
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
                raise ParameterError(f"{self.family}.{name} must be a number, got {value!r}")
            if name in _INTEGER_PARAMS:
                if int(value) != value:
                    raise ParameterError(f"{self.family}.{name} must be an integer, got {value!r}")
                value = int(value)
            else:
                value = float(value)
                if not math.isfinite(value):
                    raise ParameterError(f"{self.family}.{name} must be finite")
            clean[name] = value
        object.__setattr__(self, "params", clean)
        self._validate()

    def _validate(self):
        p = self.params
        fam = self.family

        def prob(name, lo_open=False, hi_open=False):
            v = p[name]
            lo_ok = v > 0 if lo_open else v >= 0
            hi_ok = v < 1 if hi_open else v <= 1
            if not (lo_ok and hi_ok):
                lo = "(" if lo_open else "["
                hi = ")" if hi_open else "]"
                raise ParameterError(f"{fam}.{name}={v} outside {lo}0, 1{hi}")

        if fam == "Dirac":
            if p["value"] < 0:
                raise ParameterError("Dirac value must be >= 0")
        elif fam == "Bernoulli":
            prob("p")
        elif fam == "Binomial":
            if p["m"] < 0:
                raise ParameterError("Binomial m must be >= 0")
            prob("p")
        elif fam == "Poisson":
            if p["lam"] < 0:
                raise ParameterError("Poisson lam must be >= 0")
        elif fam == "Geometric":
            prob("p", lo_open=True)
        else:
            if p["alpha"] <= 0:
                raise ParameterError(f"{fam}.alpha must be > 0")
            prob("c0", lo_open=True)
            if fam == "ZeroInflatedPareto":
                prob("q", hi_open=True)

    def __getattr__(self, name):
        # dataclass fields are found before this hook runs
        params = self.__dict__.get("params", {})
        if name in params:
            return params[name]
        raise AttributeError(name)

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items()))))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.family}({args})"

    @property
    def is_pareto(self) -> bool:
        return self.family in ("DiscretePareto", "ZeroInflatedPareto")

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}

    @classmethod
    def from_dict(cls, data: dict) -> "DistributionSpec":
        if not isinstance(data, dict) or "family" not in data:
            raise ParameterError("distribution must be an object with a 'family' key")
        params = {k: v for k, v in data.items() if k != "family"}
        return cls(data["family"], params)


def Dirac(value: int) -> DistributionSpec:
    return DistributionSpec("Dirac", {"value": value})


def Bernoulli(p: float) -> DistributionSpec:
    return DistributionSpec("Bernoulli", {"p": p})


def Binomial(m: int, p: float) -> DistributionSpec:
    return DistributionSpec("Binomial", {"m": m, "p": p})


def Poisson(lam: float) -> DistributionSpec:
    return DistributionSpec("Poisson", {"lam": lam})


def Geometric(p: float) -> DistributionSpec:
    """Failures before the first success, support {0, 1, ...}; mean (1-p)/p."""
    return DistributionSpec("Geometric", {"p": p})


def DiscretePareto(alpha: float, c0: float = 1.0) -> DistributionSpec:
    return DistributionSpec("DiscretePareto", {"alpha": alpha, "c0": c0})


def ZeroInflatedPareto(q: float, alpha: float, c0: float = 1.0) -> DistributionSpec:
    """Zero with probability ``1 - q``, otherwise a ``DiscretePareto(alpha, c0)`` draw."""
    return DistributionSpec("ZeroInflatedPareto", {"q": q, "alpha": alpha, "c0": c0})


# ---------------------------------------------------------------------------
# random streams


class RandomStream:
    """Counter-based random stream keyed by ``(master_seed, stream)``.

    Backed by the Philox-4x64 counter-based generator: the 128-bit key is the
    pair (master seed, stream index) and the counter starts at zero, so two
    streams with the same key produce bit-identical output and streams with
    different indices share no state.
    """

    __slots__ = ("master_seed", "stream", "generator")

    def __init__(self, master_seed: int, stream: int = 0):
        master_seed = int(master_seed)
        stream = int(stream)
        if not 0 <= master_seed < 2**64:
            raise ParameterError("master_seed must be a 64-bit unsigned integer")
        if not 0 <= stream < 2**64:
            raise ParameterError("stream index must be a nonnegative 64-bit integer")
        self.master_seed = master_seed
        self.stream = stream
        key = np.array([master_seed, stream], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RandomStream(master_seed={self.master_seed}, stream={self.stream})"

    def spawn(self, stream: int) -> "RandomStream":
        """A fresh stream with the same master seed and another index."""
        return RandomStream(self.master_seed, stream)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RandomStream or numpy Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# sampling


def _pareto_positive(gen: np.random.Generator, alpha: float, c0: float, size) -> np.ndarray:
    # exact inversion of P(X > n) = c0 (1+n)^-alpha, U uniform on (0, 1]
    u = 1.0 - gen.random(size)
    x = np.ceil((c0 / u) ** (1.0 / alpha)) - 1.0
    np.clip(x, 0.0, float(PARETO_CAP), out=x)
    return x.astype(np.int64)


def sample(dist: DistributionSpec, rng, size=None):
    """Draw from ``dist``.

    Returns a Python ``int`` when ``size`` is None, else an int64 array.
    """
    gen = as_generator(rng)
    shape = 1 if size is None else size
    fam = dist.family
    p = dist.params
    if fam == "Dirac":
        out = np.full(shape, p["value"], dtype=np.int64)
    elif fam == "Bernoulli":
        out = gen.binomial(1, p["p"], shape)
    elif fam == "Binomial":
        out = gen.binomial(p["m"], p["p"], shape)
    elif fam == "Poisson":
        out = gen.poisson(p["lam"], shape)
    elif fam == "Geometric":
        out = gen.geometric(p["p"], shape) - 1
    elif fam == "DiscretePareto":
        out = _pareto_positive(gen, p["alpha"], p["c0"], shape)
    else:
        keep = gen.random(shape) < p["q"]
        out = _pareto_positive(gen, p["alpha"], p["c0"], shape) * keep
    out = np.asarray(out, dtype=np.int64)
    if size is None:
        return int(out[0])
    return out


# ---------------------------------------------------------------------------
# exact queries


def tail_prob(dist: DistributionSpec, x) -> float:
    """Exact ``P(X > x)``; equals 1 for ``x < 0``."""
    x = math.floor(x)
    if x < 0:
        return 1.0
    p = dist.params
    fam = dist.family
    if fam == "Dirac":
        return 1.0 if x < p["value"] else 0.0
    if fam == "Bernoulli":
        return p["p"] if x == 0 else 0.0
    if fam == "Geometric":
        return (1.0 - p["p"]) ** (x + 1)
    if fam == "DiscretePareto":
        return p["c0"] * (1.0 + x) ** -p["alpha"]
    if fam == "ZeroInflatedPareto":
        return p["q"] * p["c0"] * (1.0 + x) ** -p["alpha"]
    if fam == "Binomial":
        return float(stats.binom.sf(x, p["m"], p["p"]))
    return float(stats.poisson.sf(x, p["lam"]))


def pmf(dist: DistributionSpec, n: int) -> float:
    """Exact ``P(X = n)``."""
    if n < 0:
        return 0.0
    fam = dist.family
    p = dist.params
    if fam == "Binomial":
        return float(stats.binom.pmf(n, p["m"], p["p"]))
    if fam == "Poisson":
        return float(stats.poisson.pmf(n, p["lam"]))
    return tail_prob(dist, n - 1) - tail_prob(dist, n)


def pmf_array(dist: DistributionSpec, cap: int) -> np.ndarray:
    """Vector of ``P(X = n)`` for ``n = 0..cap``."""
    n = np.arange(cap + 1)
    fam = dist.family
    p = dist.params
    if fam == "Binomial":
        return stats.binom.pmf(n, p["m"], p["p"])
    if fam == "Poisson":
        return stats.poisson.pmf(n, p["lam"])
    if fam == "Geometric":
        return p["p"] * (1.0 - p["p"]) ** n
    if dist.is_pareto:
        scale = p["c0"] * (p["q"] if fam == "ZeroInflatedPareto" else 1.0)
        surv = scale * (1.0 + n) ** -p["alpha"]
        prev = np.concatenate(([1.0], surv[:-1]))
        return prev - surv
    return np.array([pmf(dist, k) for k in n])


def _series_remainder(alpha: float, s: float, last: int) -> float:
    # terms after index `last` shrink at least geometrically (ratio <= s),
    # and for alpha > 1 are also dominated by the zeta tail
    nxt = (last + 2.0) ** -alpha * s ** (last + 1)
    bound = nxt / (1.0 - s)
    if alpha > 1.0:
        bound = min(bound, (last + 1.0) ** (1.0 - alpha) / (alpha - 1.0))
    return bound


def _pareto_tail_series(alpha: float, s: float) -> float:
    """``sum_{n>=0} (1+n)^-alpha s^n`` for ``0 <= s < 1``.

    Summed directly in chunks until the remainder bound of
    :func:`_series_remainder` drops below PGF_TOL. If that needs more than
    2**22 terms the polylogarithm identity ``Li_alpha(s) / s`` is used
    instead.
    """
    if s == 0.0:
        return 1.0
    if _series_remainder(alpha, s, _MAX_SERIES_TERMS) >= PGF_TOL:
        return float(mpmath.polylog(alpha, s) / s)
    total = 0.0
    start = 0
    chunk = 4096
    while True:
        n = np.arange(start, start + chunk, dtype=np.float64)
        total += float(np.sum((1.0 + n) ** -alpha * np.exp(n * math.log(s))))
        last = start + chunk - 1
        if _series_remainder(alpha, s, last) < PGF_TOL:
            return total
        start += chunk
        chunk *= 2


def pgf_eval(dist: DistributionSpec, s: float) -> float:
    """Probability generating function ``E(s^X)`` for ``s`` in [0, 1]."""
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ParameterError(f"pgf argument {s} outside [0, 1]")
    if s == 1.0:
        return 1.0
    p = dist.params
    fam = dist.family
    if fam == "Dirac":
        return s ** p["value"]
    if fam == "Bernoulli":
        return 1.0 - p["p"] + p["p"] * s
    if fam == "Binomial":
        return (1.0 - p["p"] + p["p"] * s) ** p["m"]
    if fam == "Poisson":
        return math.exp(p["lam"] * (s - 1.0))
    if fam == "Geometric":
        return p["p"] / (1.0 - (1.0 - p["p"]) * s)
    # 1 - g(s) = (1 - s) * sum_n P(X > n) s^n
    scale = p["c0"] * (p["q"] if fam == "ZeroInflatedPareto" else 1.0)
    return 1.0 - (1.0 - s) * scale * _pareto_tail_series(p["alpha"], s)


def tail_gf(dist: DistributionSpec, s: float) -> float:
    """Tail generating function ``sum_n P(X > n) s^n = (1 - g(s)) / (1 - s)``.

    Written without the subtraction so it stays accurate as ``s -> 1``; at
    ``s = 1`` it is the mean.
    """
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ParameterError(f"argument {s} outside [0, 1]")
    p = dist.params
    fam = dist.family
    if s == 1.0:
        return raw_moment(dist, 1)
    if fam == "Dirac":
        v = p["value"]
        return float(sum(s**i for i in range(v))) if v < 64 else (1.0 - s**v) / (1.0 - s)
    if fam == "Bernoulli":
        return p["p"]
    if fam == "Binomial":
        if p["p"] == 0.0 or p["m"] == 0:
            return 0.0
        return -math.expm1(p["m"] * math.log1p(-p["p"] * (1.0 - s))) / (1.0 - s)
    if fam == "Poisson":
        if p["lam"] == 0.0:
            return 0.0
        return -math.expm1(p["lam"] * (s - 1.0)) / (1.0 - s)
    if fam == "Geometric":
        return (1.0 - p["p"]) / (1.0 - (1.0 - p["p"]) * s)
    scale = p["c0"] * (p["q"] if fam == "ZeroInflatedPareto" else 1.0)
    return scale * _pareto_tail_series(p["alpha"], s)


def prob_positive(dist: DistributionSpec) -> float:
    return tail_prob(dist, 0)


def tail_index(dist: DistributionSpec) -> float:
    """Regular-variation index; ``inf`` for light-tailed families."""
    return dist.params["alpha"] if dist.is_pareto else math.inf


def _factorial_moment(dist: DistributionSpec, r: int) -> float:
    p = dist.params
    fam = dist.family
    if fam == "Dirac":
        v = p["value"]
        out = 1.0
        for i in range(r):
            out *= v - i
        return float(out)
    if fam == "Bernoulli":
        return p["p"] if r == 1 else 0.0
    if fam == "Binomial":
        m = p["m"]
        out = p["p"] ** r
        for i in range(r):
            out *= m - i
        return float(out)
    if fam == "Poisson":
        return p["lam"] ** r
    if fam == "Geometric":
        return math.factorial(r) * ((1.0 - p["p"]) / p["p"]) ** r
    raise ParameterError(f"no factorial moments for {fam}")


def raw_moment(dist: DistributionSpec, r: int) -> float:
    """``E(X^r)`` for ``r`` in {1, 2, 3}; ``inf`` when it diverges."""
    if r not in (1, 2, 3):
        raise ParameterError("raw_moment supports r = 1, 2, 3")
    if dist.is_pareto:
        p = dist.params
        a = p["alpha"]
        if a <= r:
            return math.inf
        scale = p["c0"] * (p["q"] if dist.family == "ZeroInflatedPareto" else 1.0)
        # E X^r = sum_{m>=1} (m^r - (m-1)^r) P(X > m-1)
        z = special.zeta
        if r == 1:
            val = z(a)
        elif r == 2:
            val = 2 * z(a - 1) - z(a)
        else:
            val = 3 * z(a - 2) - 3 * z(a - 1) + z(a)
        return float(scale * val)
    f1 = _factorial_moment(dist, 1)
    if r == 1:
        return f1
    f2 = _factorial_moment(dist, 2)
    if r == 2:
        return f2 + f1
    return _factorial_moment(dist, 3) + 3 * f2 + f1


def moments(dist: DistributionSpec) -> tuple[float, float, bool]:
    """``(mean, second moment, log-moment finite)``; divergent moments are ``inf``.

    ``E log(1 + X)`` is finite for every implemented family.
    """
    return raw_moment(dist, 1), raw_moment(dist, 2), True


def variance(dist: DistributionSpec) -> float:
    m1, m2, _ = moments(dist)
    if math.isinf(m2):
        return math.inf
    return max(m2 - m1 * m1, 0.0)

