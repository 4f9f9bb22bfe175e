"""Probabilistic indoor-temperature forecasting for heating MPC.

Three model families over one data pipeline: a Bayesian gray-box linear
state-space model, a deterministic LSTM+MLP, and a partially stochastic
LSTM+BNN with built-in uncertainty quantification; plus a synthetic
building simulator and an evaluation harness.
"""

__version__ = "0.1.0"

from .data import BuildingDataset, HourlyRecord, SiteMeta, hour_of_week_index
from .features import SupervisedSet, build_supervised, chronological_split
from .forecast import ExogenousInputs, ForecastResult
from .simulate import SimConfig, simulate_building
from .solar import SolarPosition, solar_position

__all__ = [
    "BuildingDataset", "HourlyRecord", "SiteMeta", "hour_of_week_index",
    "SupervisedSet", "build_supervised", "chronological_split",
    "ExogenousInputs", "ForecastResult",
    "SimConfig", "simulate_building",
    "SolarPosition", "solar_position",
    "__version__",
]
