"""Three-party coherent one-way conference key agreement: rates, optimizer, simulator."""

from .keyrate import (
    BoundsRow,
    CowInputs,
    conference_key_rate,
    cow_key_rate,
    eta_lim_bound,
    repeaterless_bound,
)
from .model import ExperimentParams, FreeParams, RateBreakdown
from .montecarlo import (
    InsufficientStatistics,
    TranscriptStats,
    empirical_key_rate,
    folding_equivalence_stats,
    run_protocol,
)
from .optimizer import OptimizerConfig, SweepRow, grid_oracle, optimize, sweep

__all__ = [
    "BoundsRow",
    "CowInputs",
    "ExperimentParams",
    "FreeParams",
    "InsufficientStatistics",
    "OptimizerConfig",
    "RateBreakdown",
    "SweepRow",
    "TranscriptStats",
    "conference_key_rate",
    "cow_key_rate",
    "empirical_key_rate",
    "eta_lim_bound",
    "folding_equivalence_stats",
    "grid_oracle",
    "optimize",
    "repeaterless_bound",
    "run_protocol",
    "sweep",
]
