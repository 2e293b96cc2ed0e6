"""Tube-enhanced multi-stage NMPC: model inspection, config round-trips,
single closed-loop episodes and tightening calibration. Batch grids and CSV
output live in the `tems` CLI binary."""

from ._core import (
    builtin_models,
    calibrate,
    canonical_config,
    config_hash,
    config_scenario_count,
    model_info,
    naive_scenario_count,
    run_episode,
    state_node_count,
    tighten_intervals,
)

__version__ = "0.1.0"

__all__ = [
    "builtin_models",
    "calibrate",
    "canonical_config",
    "config_hash",
    "config_scenario_count",
    "model_info",
    "naive_scenario_count",
    "run_episode",
    "state_node_count",
    "tighten_intervals",
    "__version__",
]
