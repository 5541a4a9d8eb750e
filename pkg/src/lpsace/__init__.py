"""Bayesian longitudinal principal stratification for outcomes truncated by death."""

from .data import Dataset, FirmRecord, load_dataset
from .estimands import impute_and_sace, sace_table, sace_trajectory, stratum_proportions
from .likelihood import Posterior, log_posterior, grad_log_posterior
from .model import BlockLayout, PriorSpec
from .sampler import HmcConfig, PosteriorDraws, run_hmc
from .simulation import GeneratorSpec, oracle_sace, simulate_dataset
from .strata import Stratum, StratumSequence, compatible_strata, enumerate_sequences

__version__ = "0.1.0"

__all__ = [
    "BlockLayout",
    "Dataset",
    "FirmRecord",
    "GeneratorSpec",
    "HmcConfig",
    "Posterior",
    "PosteriorDraws",
    "PriorSpec",
    "Stratum",
    "StratumSequence",
    "compatible_strata",
    "enumerate_sequences",
    "grad_log_posterior",
    "impute_and_sace",
    "load_dataset",
    "log_posterior",
    "oracle_sace",
    "run_hmc",
    "sace_table",
    "sace_trajectory",
    "simulate_dataset",
    "stratum_proportions",
]
