"""Sampling the conditional Bernoulli distribution with an MCMC swap chain."""

from .coupled import PartitionThresholds, contraction_rate, coupled_step, transition_law
from .exact import build_table, sample_exact, sample_exact_batch
from .state import CBModel, ChainState, CoupledState, PartitionLabel, build_model, initial_state
from .swap import run as swap_run
from .swap import step as swap_step

__all__ = [
    "CBModel",
    "ChainState",
    "CoupledState",
    "PartitionLabel",
    "PartitionThresholds",
    "build_model",
    "build_table",
    "contraction_rate",
    "coupled_step",
    "initial_state",
    "sample_exact",
    "sample_exact_batch",
    "swap_run",
    "swap_step",
    "transition_law",
]

__version__ = "0.1.0"
