"""Branching processes with immigration and heavy-tailed offspring or immigration.

Simulation (forward paths and exact stationary draws), simulation-free
oracles, tail constants, extreme-value and partial-sum diagnostics.
"""
from .heavy_rng import (
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
    pgf_eval,
    pmf,
    raw_moment,
    sample,
    tail_prob,
)
from .process_core import (
    ConfigError,
    ErgodicityReport,
    ModelConfig,
    NonErgodicError,
    PathSample,
    check_ergodicity,
    coupled_paths,
    iterated_thin,
    sample_stationary_backward,
    simulate_path,
    step,
    thin,
)
from .pgf_oracle import (
    StationaryOracle,
    exact_m2,
    exact_m3,
    m3_upper_bound,
    stationary_moments,
    stationary_pgf,
    stationary_pmf_bruteforce,
)
from .tail_analysis import (
    TailReport,
    compound_tail_check,
    hill,
    model1_tail_constant,
    model2_tail_constants,
    norming_sequence,
    tail_ratio_curve,
    tail_report,
)
from .extremes import (
    ExtremesReport,
    block_maxima,
    cluster_size_fit,
    decluster,
    extremal_index_estimate,
    frechet_gof,
    tail_process_profile,
    theoretical_extremal_index,
)
from .sums_limits import (
    SumsReport,
    long_run_variance,
    partial_sum_replicates,
    regime_centering,
    stable_diagnostics,
)

__version__ = "0.1.0"
