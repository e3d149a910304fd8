"""Adaptive particle marginal Metropolis-Hastings for population state-space models."""

from .bcrlb import bcrlb_marginal, fim_step, kalman_information_filter_M0
from .data import SyntheticTruth, TimeSeriesData, load_series, simulate_dataset, write_series
from .evidence import EvidenceEstimate, bayes_factor, bf_table, estimate_log_evidence
from .models import DomainError, ModelId, Params, Prior, equilibria, transition_mean
from .particle_filter import FilterOutput, run_sir
from .rng import make_rng
from .sampler import ChainRecord, SamplerConfig, run_chain

__version__ = "0.1.0"

__all__ = [
    "ChainRecord", "DomainError", "EvidenceEstimate", "FilterOutput", "ModelId", "Params", "Prior",
    "SamplerConfig", "SyntheticTruth", "TimeSeriesData", "bayes_factor", "bcrlb_marginal", "bf_table",
    "equilibria", "estimate_log_evidence", "fim_step", "kalman_information_filter_M0", "load_series",
    "make_rng", "run_chain", "run_sir", "simulate_dataset", "transition_mean", "write_series",
]
