"""Evaluation protocol: test-instant selection, multi-horizon RMSE,
drift curves, weighted scores, prior sweeps, and uncertainty diagnostics.

Prediction matrices stack one row per (building, test instant); the
production protocol uses a 48-hour horizon, which the config layer
enforces, while the metric functions accept any horizon so small worked
examples stay testable.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta

import numpy as np
from scipy.stats import spearmanr

from .data import BuildingDataset, hour_of_week_index
from .errors import ConfigError, InsufficientData, ShapeError
from .features import WINDOW_LENGTH, build_supervised, chronological_split
from .forecast import ExogenousInputs, ForecastResult
from .graybox import GrayboxPosterior, filtered_state_at
from .graybox import forecast as graybox_forecast
from .models import KIND_STOCHASTIC, TrainConfig, TrainedModel, rollout, train
from .solar import solar_position

DEFAULT_HORIZON = 48


@dataclass(frozen=True)
class PredictionMatrix:
    """Stacked predictions with the paired truth, shapes (rows, H)."""

    predictions: np.ndarray
    truth: np.ndarray

    def __post_init__(self) -> None:
        if self.predictions.shape != self.truth.shape or self.predictions.ndim != 2:
            raise ShapeError("predictions and truth must be equal 2-D shapes")

    @property
    def horizon(self) -> int:
        return self.predictions.shape[1]


@dataclass(frozen=True)
class WeightProfile:
    """Horizon weights, non-increasing and normalized to sum one."""

    kind: str = "unweighted"
    midpoint: float = 12.0
    steepness: float = 3.0

    def __post_init__(self) -> None:
        if self.kind not in ("unweighted", "linear", "sigmoid"):
            raise ConfigError(f"unknown weight profile kind {self.kind!r}")
        if self.kind == "sigmoid" and self.steepness <= 0:
            raise ConfigError("sigmoid steepness must be > 0")

    def weights(self, horizon: int) -> np.ndarray:
        j = np.arange(1, horizon + 1, dtype=float)
        if self.kind == "unweighted":
            w = np.ones(horizon)
        elif self.kind == "linear":
            w = horizon - j + 1.0
        else:
            w = 1.0 / (1.0 + np.exp((j - self.midpoint) / self.steepness))
        return w / w.sum()

    def describe(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "sigmoid":
            out["midpoint"] = self.midpoint
            out["steepness"] = self.steepness
        return out


@dataclass(frozen=True)
class DistributionSummary:
    median: float
    q25: float
    q75: float
    q025: float
    q975: float

    @classmethod
    def of(cls, values: np.ndarray) -> "DistributionSummary":
        qs = np.quantile(values, [0.5, 0.25, 0.75, 0.025, 0.975])
        return cls(*(float(v) for v in qs))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def horizon_rmse(truth: np.ndarray, pred: np.ndarray, k: int) -> np.ndarray:
    """Per-row RMSE over the first ``k`` horizon steps."""
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape or truth.ndim != 2:
        raise ShapeError(f"shape mismatch {truth.shape} vs {pred.shape}")
    if not 1 <= k <= truth.shape[1]:
        raise ShapeError(f"k={k} outside [1, {truth.shape[1]}]")
    err = truth[:, :k] - pred[:, :k]
    return np.sqrt(np.mean(err * err, axis=1))


def drift_curve(truth: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Per-horizon-step RMSE averaged over rows."""
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape or truth.ndim != 2:
        raise ShapeError(f"shape mismatch {truth.shape} vs {pred.shape}")
    err = truth - pred
    return np.sqrt(np.mean(err * err, axis=0))


def weighted_score(drift: np.ndarray, profile: WeightProfile) -> float:
    drift = np.asarray(drift, dtype=float)
    return float(profile.weights(len(drift)) @ drift)


@dataclass(frozen=True)
class UncertaintyBins:
    std_mean: np.ndarray
    error_mean: np.ndarray
    count: np.ndarray
    spearman: float
    p_value: float


def uncertainty_error_bins(step_std: np.ndarray, abs_err: np.ndarray,
                           bins: int = 10) -> UncertaintyBins:
    """Equal-count bins of predictive std vs mean absolute error, plus the
    Spearman rank correlation over the raw samples."""
    step_std = np.asarray(step_std, dtype=float)
    abs_err = np.asarray(abs_err, dtype=float)
    if step_std.shape != abs_err.shape or step_std.ndim != 1:
        raise ShapeError("step_std and abs_err must be equal-length vectors")
    if bins < 2:
        raise ConfigError("need at least 2 bins")
    if len(step_std) < bins:
        raise InsufficientData(f"{len(step_std)} samples cannot fill {bins} bins")
    if np.ptp(step_std) < 1e-15:
        raise InsufficientData("constant predictive std: quantile bins undefined")
    order = np.argsort(step_std, kind="stable")
    chunks = np.array_split(order, bins)
    if any(len(c) == 0 for c in chunks):
        raise InsufficientData("empty uncertainty bin")
    rho, p = spearmanr(step_std, abs_err)
    return UncertaintyBins(
        std_mean=np.array([step_std[c].mean() for c in chunks]),
        error_mean=np.array([abs_err[c].mean() for c in chunks]),
        count=np.array([len(c) for c in chunks]),
        spearman=float(rho), p_value=float(p))


# ---------------------------------------------------------------------------
# protocol plumbing
# ---------------------------------------------------------------------------

def select_test_instants(dataset: BuildingDataset, count: int, horizon: int,
                         window: int = WINDOW_LENGTH,
                         start: datetime | None = None,
                         end: datetime | None = None) -> list[datetime]:
    """Evenly spaced forecast origins over the test range.

    An origin is valid when the dataset holds contiguous records from
    ``window`` hours before it through ``horizon`` hours after it.
    Invalid candidates shift to the nearest valid hour (earlier wins
    ties); duplicates collapse. Deterministic.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    lo = dataset.start + timedelta(hours=window)
    hi = dataset.end - timedelta(hours=horizon)
    if start is not None and start > lo:
        lo = start
    if end is not None and end < hi:
        hi = end
    span = int((hi - lo).total_seconds() // 3600)
    if span < 0:
        raise InsufficientData("test range shorter than window + horizon")

    def valid(ts: datetime) -> bool:
        return dataset.contiguous_span(ts, before=window, after=horizon)

    def nearest_valid(ts: datetime) -> datetime | None:
        if valid(ts):
            return ts
        for d in range(1, span + 1):
            earlier = ts - timedelta(hours=d)
            if earlier >= lo and valid(earlier):
                return earlier
            later = ts + timedelta(hours=d)
            if later <= hi and valid(later):
                return later
        return None

    if count == 1:
        offsets = [span // 2]
    else:
        offsets = [round(i * span / (count - 1)) for i in range(count)]
    chosen: list[datetime] = []
    seen = set()
    for off in offsets:
        ts = nearest_valid(lo + timedelta(hours=off))
        if ts is not None and ts not in seen:
            seen.add(ts)
            chosen.append(ts)
    if len(chosen) < count:
        raise InsufficientData(
            f"only {len(chosen)} of {count} requested test instants are feasible")
    return sorted(chosen)


def make_exogenous(dataset: BuildingDataset, instant: datetime,
                   horizon: int) -> ExogenousInputs:
    """Future drivers for the H hours after ``instant``, read back from the
    dataset records (a perfect-forecast stand-in)."""
    row = dataset.row_at(instant)
    if row is None or not dataset.contiguous_span(instant, before=0, after=horizon):
        raise InsufficientData(f"no contiguous future records after {instant.isoformat()}")
    recs = dataset.records[row + 1:row + 1 + horizon]
    site = dataset.site
    elev = np.empty(horizon)
    azi = np.empty(horizon)
    slot = np.empty(horizon)
    for k, r in enumerate(recs):
        pos = solar_position(r.timestamp, site.latitude, site.longitude)
        elev[k], azi[k] = pos.elevation, pos.azimuth
        slot[k] = hour_of_week_index(r.timestamp, site)
    return ExogenousInputs(
        t_sup=np.array([r.t_sup for r in recs]),
        t_out=np.array([r.t_out for r in recs]),
        ghi=np.array([r.ghi for r in recs]),
        sun_elevation=elev, sun_azimuth=azi, hour_of_week=slot)


def truth_path(dataset: BuildingDataset, instant: datetime, horizon: int) -> np.ndarray:
    row = dataset.row_at(instant)
    return dataset.t_in[row + 1:row + 1 + horizon].copy()


def forecast_at(model: GrayboxPosterior | TrainedModel, dataset: BuildingDataset,
                instant: datetime, horizon: int, n_samples: int = 1,
                rng: np.random.Generator | None = None) -> ForecastResult:
    """Forecast H steps from ``instant`` with either model family."""
    future = make_exogenous(dataset, instant, horizon)
    if isinstance(model, GrayboxPosterior):
        state = filtered_state_at(model, dataset, instant)
        return graybox_forecast(model, state, future)
    row = dataset.row_at(instant)
    history = list(dataset.records[max(0, row - WINDOW_LENGTH):row + 1])
    return rollout(model, history, future, dataset.site,
                   n_samples=n_samples, rng=rng)


def prediction_matrix(model, dataset: BuildingDataset, instants: list[datetime],
                      horizon: int, n_samples: int = 1,
                      rng: np.random.Generator | None = None) -> PredictionMatrix:
    preds = np.empty((len(instants), horizon))
    truths = np.empty((len(instants), horizon))
    for i, ts in enumerate(instants):
        preds[i] = forecast_at(model, dataset, ts, horizon, n_samples, rng).mean
        truths[i] = truth_path(dataset, ts, horizon)
    return PredictionMatrix(predictions=preds, truth=truths)


def one_step_uncertainty(model: TrainedModel, dataset: BuildingDataset,
                         instants: list[datetime], n_samples: int,
                         rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-instant 1-hour predictive std and absolute error of the
    predictive mean."""
    stds = np.empty(len(instants))
    errs = np.empty(len(instants))
    for i, ts in enumerate(instants):
        fc = forecast_at(model, dataset, ts, horizon=1, n_samples=n_samples, rng=rng)
        stds[i] = fc.step_std[0]
        errs[i] = abs(truth_path(dataset, ts, 1)[0] - fc.mean[0])
    return stds, errs


# ---------------------------------------------------------------------------
# prior sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCase:
    prior_variance: float
    seed: int
    rmse: dict[int, DistributionSummary]
    final_kl: float


def prior_sweep(prior_variances: list[float], seeds: list[int],
                dataset: BuildingDataset, config: TrainConfig,
                test_count: int, horizon: int, k_values: list[int],
                n_samples: int, split_ratio: float = 0.9,
                test_start: datetime | None = None) -> list[SweepCase]:
    """Train one stochastic model per (prior variance, seed) on a shared
    fixture and report horizon-RMSE summaries plus the KL term the run
    converged to."""
    if not prior_variances:
        raise ConfigError("need at least one prior variance")
    if max(k_values) > horizon:
        raise ConfigError("horizon must cover every K")
    train_ds, instants = _split_for_protocol(dataset, test_count, horizon, test_start)
    samples = build_supervised(train_ds)
    tr, va = chronological_split(samples, split_ratio)
    cases = []
    for beta2 in prior_variances:
        for seed in seeds:
            cfg = replace(config, prior_variance=beta2, seed=seed)
            model = train(KIND_STOCHASTIC, tr, va, cfg)
            rng = np.random.default_rng(seed + 1)
            pm = prediction_matrix(model, dataset, instants, horizon, n_samples, rng)
            rmse = {k: DistributionSummary.of(horizon_rmse(pm.truth, pm.predictions, k))
                    for k in k_values}
            cases.append(SweepCase(prior_variance=beta2, seed=seed, rmse=rmse,
                                   final_kl=float(model.final_kl)))
    return cases


def _split_for_protocol(dataset: BuildingDataset, test_count: int, horizon: int,
                        test_start: datetime | None):
    """Default protocol split: the last quarter of the records hosts the
    test instants, everything before it is training data."""
    if test_start is None:
        cut = max(1, int(len(dataset) * 0.75))
        test_start = dataset.records[cut].timestamp
    else:
        cut_row = dataset.row_at(test_start)
        if cut_row is None:
            raise InsufficientData(f"test_start {test_start.isoformat()} not in dataset")
        cut = cut_row
    train_ds = dataset.slice_rows(0, cut)
    instants = select_test_instants(dataset, test_count, horizon, start=test_start)
    return train_ds, instants
