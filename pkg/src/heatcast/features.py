"""Feature construction, windowing, and hourly-difference targets.

Each sample is an L x M window of the six model inputs ending at the
prediction instant t, paired with the indoor temperature change from t to
t+1h. Windows never span data gaps and no imputation happens anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Callable

import numpy as np

from .data import BuildingDataset, hour_of_week_index
from .errors import EmptyDataset, InsufficientData, ShapeError
from .solar import SolarPosition, solar_position

#: Fixed feature column order for all models.
FEATURE_COLUMNS = ("dt_supply", "dt_outdoor", "ghi", "sun_elevation",
                   "sun_azimuth", "hour_of_week")
WINDOW_LENGTH = 7
N_FEATURES = 6
#: Column that stays raw (ordinal weekly slot, never z-scored).
HOUR_OF_WEEK_COLUMN = 5

SolarProvider = Callable[[datetime, float, float], SolarPosition]


@dataclass(frozen=True)
class FeatureScaler:
    """Per-column z-scoring statistics; the hour-of-week column is pinned
    to identity so the ordinal index passes through untouched."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, inputs: np.ndarray) -> "FeatureScaler":
        flat = inputs.reshape(-1, inputs.shape[-1])
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)  # constant-feature guard
        mean[HOUR_OF_WEEK_COLUMN] = 0.0
        std[HOUR_OF_WEEK_COLUMN] = 1.0
        return cls(mean=mean, std=std)

    def transform(self, inputs: np.ndarray) -> np.ndarray:
        return (inputs - self.mean) / self.std

    def inverse(self, normalized: np.ndarray) -> np.ndarray:
        return normalized * self.std + self.mean


@dataclass(frozen=True)
class SupervisedSet:
    """Raw windowed features, hourly-difference targets, and the scaler.

    ``inputs`` is (N, L, M) unnormalized; models call
    ``normalized_inputs()``. ``targets`` stay raw degC/hour. ``index``
    holds the prediction instants t; targets[i] is t_in(t+1h) - t_in(t).
    """

    inputs: np.ndarray
    targets: np.ndarray
    index: tuple[datetime, ...]
    scaler: FeatureScaler

    def __post_init__(self) -> None:
        if self.inputs.ndim != 3:
            raise ShapeError(f"inputs must be (N, L, M), got {self.inputs.shape}")
        n = self.inputs.shape[0]
        if self.targets.shape != (n,) or len(self.index) != n:
            raise ShapeError("inputs, targets, and index lengths disagree")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def normalized_inputs(self) -> np.ndarray:
        return self.scaler.transform(self.inputs)


def feature_rows(dataset: BuildingDataset, solar: SolarProvider = solar_position) -> np.ndarray:
    """Per-record feature vectors in the fixed column order, one row per record."""
    site = dataset.site
    rows = np.empty((len(dataset), N_FEATURES))
    rows[:, 0] = dataset.t_sup - dataset.t_in
    rows[:, 1] = dataset.t_out - dataset.t_in
    rows[:, 2] = dataset.ghi
    for i, rec in enumerate(dataset.records):
        pos = solar(rec.timestamp, site.latitude, site.longitude)
        rows[i, 3] = pos.elevation
        rows[i, 4] = pos.azimuth
        rows[i, 5] = hour_of_week_index(rec.timestamp, site)
    return rows


def build_supervised(dataset: BuildingDataset,
                     solar: SolarProvider = solar_position) -> SupervisedSet:
    """Window the dataset into supervised samples.

    A sample exists at instant t when the window hours t-(L-1)..t and the
    target hour t+1 are all present with no gap. Scaler statistics come
    from every produced sample; re-fit on the training partition via
    chronological_split before modeling.
    """
    rows = feature_rows(dataset, solar)
    hours = dataset.hours
    L = WINDOW_LENGTH
    inputs, targets, index = [], [], []
    for r in range(L - 1, len(dataset) - 1):
        if hours[r] - hours[r - (L - 1)] != L - 1:
            continue
        if hours[r + 1] - hours[r] != 1:
            continue
        inputs.append(rows[r - (L - 1):r + 1])
        targets.append(dataset.t_in[r + 1] - dataset.t_in[r])
        index.append(dataset.records[r].timestamp)
    if not inputs:
        raise EmptyDataset("no contiguous window of length L+1 exists")
    inputs_arr = np.stack(inputs)
    targets_arr = np.array(targets)
    return SupervisedSet(inputs=inputs_arr, targets=targets_arr,
                         index=tuple(index), scaler=FeatureScaler.fit(inputs_arr))


def chronological_split(samples: SupervisedSet, ratio: float,
                        ) -> tuple[SupervisedSet, SupervisedSet]:
    """Split into earliest floor(ratio*N) samples and the remainder.

    The scaler is re-fit on the first partition and shared with the second
    so no validation information leaks into the normalization.
    """
    if not 0.0 < ratio < 1.0:
        raise InsufficientData(f"ratio {ratio} outside (0, 1)")
    n = len(samples)
    n_train = int(np.floor(ratio * n))
    if n_train < 1 or n - n_train < 1:
        raise InsufficientData(f"split of {n} samples at ratio {ratio} leaves an empty partition")
    scaler = FeatureScaler.fit(samples.inputs[:n_train])
    train = SupervisedSet(inputs=samples.inputs[:n_train],
                          targets=samples.targets[:n_train],
                          index=samples.index[:n_train], scaler=scaler)
    val = SupervisedSet(inputs=samples.inputs[n_train:],
                        targets=samples.targets[n_train:],
                        index=samples.index[n_train:], scaler=scaler)
    return train, val
