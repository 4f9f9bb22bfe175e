"""Shared forecast containers and exogenous future inputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class ForecastResult:
    """H-step indoor-temperature forecast with per-step uncertainty.

    ``mean`` is the predictive mean path [degC]; ``step_std`` the per-step
    standard deviation (zeros for deterministic models); ``cum_std`` the
    running sum of step_std; ``n_samples`` the Monte Carlo sample count
    (1 for analytic or deterministic paths).
    """

    mean: np.ndarray
    step_std: np.ndarray
    cum_std: np.ndarray
    n_samples: int

    def __post_init__(self) -> None:
        h = self.mean.shape[0]
        if self.step_std.shape != (h,) or self.cum_std.shape != (h,):
            raise ShapeError("forecast arrays must share one horizon length")
        if np.any(self.step_std < 0):
            raise ShapeError("step_std must be non-negative")
        if np.any(np.diff(self.cum_std) < -1e-12):
            raise ShapeError("cum_std must be non-decreasing")

    @property
    def horizon(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ExogenousInputs:
    """Known (or forecast) future drivers for H hourly steps ahead.

    Everything a model needs except the indoor temperature: supply and
    outdoor temperatures, irradiance, sun angles, and the weekly slot.
    """

    t_sup: np.ndarray
    t_out: np.ndarray
    ghi: np.ndarray
    sun_elevation: np.ndarray
    sun_azimuth: np.ndarray
    hour_of_week: np.ndarray

    def __post_init__(self) -> None:
        h = self.t_sup.shape[0]
        for name in ("t_out", "ghi", "sun_elevation", "sun_azimuth", "hour_of_week"):
            if getattr(self, name).shape != (h,):
                raise ShapeError(f"exogenous input {name} length differs from t_sup")

    @property
    def horizon(self) -> int:
        return self.t_sup.shape[0]
