"""Dynamics-informed reservoir computing with visibility-graph reservoirs."""

__version__ = "0.1.0"

from dyrc.dynamics import (
    DUFFING_SETS,
    DuffingParams,
    SimConfig,
    TimeSeries,
    duffing_rhs,
    integrate,
    split,
)
from dyrc.graphs import (
    NetworkMetrics,
    Section,
    WeightedDigraph,
    erdos_renyi,
    metrics,
    sample_sections,
    scale_to_spectral_radius,
    spectral_radius,
    visibility_graph,
)
from dyrc.reservoir import (
    ReservoirModel,
    ReservoirParams,
    build_input_layer,
    evolve,
    mae,
    predict_closed_loop,
    predict_open_loop,
    train_readout,
)

__all__ = [
    "DUFFING_SETS",
    "DuffingParams",
    "NetworkMetrics",
    "ReservoirModel",
    "ReservoirParams",
    "Section",
    "SimConfig",
    "TimeSeries",
    "WeightedDigraph",
    "build_input_layer",
    "duffing_rhs",
    "erdos_renyi",
    "evolve",
    "integrate",
    "mae",
    "metrics",
    "predict_closed_loop",
    "predict_open_loop",
    "sample_sections",
    "scale_to_spectral_radius",
    "spectral_radius",
    "split",
    "train_readout",
    "visibility_graph",
]
