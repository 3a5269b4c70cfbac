"""Simulation and tagged-job analysis of M/G/1 scheduling with size estimates."""

from .dist import (BoundedPareto, Deterministic, Exponential, FixedMultiplier,
                   Hyperexponential, JointSizeModel, Perfect, TwoPointMultiplier,
                   Uniform, UniformMultiplier)
from .policy import JobState, Policy, rank, service_until_rank_exceeds, worst_future_rank
from .sim import ConfigError, InstabilityError, RunSummary, SimConfig, run, run_replication
from .soap import AnalyticContext, mean_response

__version__ = "0.1.0"
