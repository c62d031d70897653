"""Delay distributions of retransmission protocols over Markov-modulated
binary erasure channels: analytical rate functions, exact small-instance
oracles, a Monte Carlo engine, and tail estimators."""

from .channel import (
    ChannelError,
    ChannelSpec,
    capacity,
    iid_as_order1,
    iid_spec,
    markov_spec,
    sample_bits,
    stationary_distribution,
)
from .estimator import (
    TailEstimate,
    detect_waist,
    empirical_ccdf,
    fit_exponential,
    fit_power_law,
)
from .oracle import exact_nf_tail, exact_nm_tail, ld_rate_check
from .protocols import (
    CodewordDist,
    ProtocolConfig,
    TrialRecord,
    run_batch,
    run_memory,
    run_memoryless,
    sample_length,
)
from .ratefn import (
    RateParams,
    RateReport,
    alpha,
    build_report,
    lambda_n,
    lambda_o,
    memory_decay_bounds,
    mu_n,
    n_b,
    rho_n,
    threshold_classify,
    throughput_exponent,
)

__version__ = "0.1.0"
