"""Bayesian linear state-space reference model.

Scalar latent indoor-temperature state with a physics-shaped transition:

    x[t] = (1 - c1 - c2) x[t-1] + c1 t_sup[t] + c2 t_out[t] + c3 ghi[t]
           + profile[slot(t)] + process noise
    y[t] = x[t] + observation noise

The 51 regression coefficients (two exchange rates, solar gain, 48 weekly
internal-gain slots) carry Gaussian factors with per-coefficient Gamma
precision hyperpriors; the two noise precisions carry Gamma factors.
Inference is mean-field coordinate ascent: the state block is a Kalman
filter + RTS smoother under expected parameters (with the coefficient-
covariance correction terms that make the block update exact, applied as
per-step pseudo-observations), the coefficient block is a joint Gaussian,
and the precision blocks are conjugate Gamma updates. Every block update
maximizes the same evidence lower bound, so the recorded trace is
non-decreasing up to floating-point noise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np
from scipy.special import digamma, gammaln

from .data import BuildingDataset, hour_of_week_index
from .errors import (ConfigError, ConvergenceError, DataError, InsufficientData,
                     InsufficientHistory, NumericalError, ShapeError)
from .forecast import ExogenousInputs, ForecastResult

N_COEFFS = 51  # supply rate, outdoor rate, solar gain, 48 profile slots
N_PARAMS = 53  # coefficients plus the two noise precisions
LOG2PI = math.log(2.0 * math.pi)
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GaussianFactor:
    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not (self.variance > 0 and np.isfinite(self.variance)):
            raise NumericalError(f"Gaussian factor variance {self.variance} not positive finite")


@dataclass(frozen=True)
class GammaFactor:
    """Gamma distribution in shape/rate form with the expectations the
    variational updates need."""

    shape: float
    rate: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.rate > 0):
            raise NumericalError("Gamma factor needs shape > 0 and rate > 0")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def mean_log(self) -> float:
        return float(digamma(self.shape)) - math.log(self.rate)

    @property
    def mean_inverse(self) -> float:
        """E[1/x]; falls back to 1/E[x] when the shape is at most one."""
        if self.shape > 1.0:
            return self.rate / (self.shape - 1.0)
        return self.rate / self.shape

    @property
    def entropy(self) -> float:
        a, b = self.shape, self.rate
        return a - math.log(b) + float(gammaln(a)) + (1.0 - a) * float(digamma(a))


@dataclass(frozen=True)
class SsmParams:
    """Point (or posterior-expected) parameter values for filtering."""

    supply_rate: float
    outdoor_rate: float
    solar_gain: float
    internal_gain_profile: np.ndarray
    process_var: float
    obs_var: float
    init_mean: float = 20.0
    init_var: float = 100.0

    def __post_init__(self) -> None:
        prof = np.asarray(self.internal_gain_profile, dtype=float)
        if prof.shape != (48,):
            raise ShapeError("internal_gain_profile must have 48 entries")
        object.__setattr__(self, "internal_gain_profile", prof)
        phi = self.transition_coeff
        if not -1.0 < phi < 1.0:
            raise ConfigError(f"transition coefficient {phi} outside (-1, 1)")
        if self.process_var < 0 or self.obs_var <= 0 or self.init_var <= 0:
            raise ConfigError("variances must be positive (process_var >= 0)")

    @property
    def transition_coeff(self) -> float:
        return 1.0 - self.supply_rate - self.outdoor_rate

    def offsets(self, inputs: np.ndarray) -> np.ndarray:
        """Per-step deterministic transition inputs from (t_sup, t_out, ghi, slot) rows."""
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] != 4:
            raise ShapeError(f"inputs must be (N, 4), got {inputs.shape}")
        slots = inputs[:, 3].astype(int)
        if np.any((slots < 1) | (slots > 48)):
            raise DataError("hour-of-week slots must lie in [1, 48]")
        return (self.supply_rate * inputs[:, 0] + self.outdoor_rate * inputs[:, 1]
                + self.solar_gain * inputs[:, 2]
                + self.internal_gain_profile[slots - 1])


@dataclass(frozen=True)
class FilterResult:
    """Filtered marginals p(x[t] | y[<=t]) and the log marginal likelihood.

    The post_* arrays additionally fold in any pseudo-observations attached
    ahead of the next transition; without pseudo-observations they equal
    the filtered arrays. They are what the smoother consumes.
    """

    means: np.ndarray
    variances: np.ndarray
    loglik: float
    post_means: np.ndarray
    post_vars: np.ndarray
    phi: float
    offsets: np.ndarray
    process_var: float


@dataclass(frozen=True)
class SmootherResult:
    means: np.ndarray
    variances: np.ndarray
    #: cross[t] = Cov(x[t], x[t+1] | all data), length N-1
    cross: np.ndarray
    #: conditional variances Var(x[t] | x[t+1], data), used for the chain entropy
    cond_vars: np.ndarray


def _filter_core(y, phi: float, offsets, q: float, r: float, m0: float, v0: float,
                 pseudo_prec=None, pseudo_mean=None) -> FilterResult:
    """Scalar Kalman forward pass; NaN observations skip the update.

    pseudo_prec[t] / pseudo_mean[t] (t >= 1) attach an extra Gaussian
    factor to x[t-1] before predicting x[t].
    """
    n = len(y)
    y = [float(v) for v in y]
    offs = [float(v) for v in offsets]
    means = [0.0] * n
    variances = [0.0] * n
    post_means = [0.0] * n
    post_vars = [0.0] * n
    taus = [0.0] * n if pseudo_prec is None else [float(v) for v in pseudo_prec]
    mus = [0.0] * n if pseudo_mean is None else [float(v) for v in pseudo_mean]
    loglik = 0.0
    m, v = m0, v0
    for t in range(n):
        if t > 0:
            m = phi * post_means[t - 1] + offs[t]
            v = phi * phi * post_vars[t - 1] + q
        if v <= 0:
            raise NumericalError(f"non-positive predicted variance at step {t}")
        obs = y[t]
        if not math.isnan(obs):
            s = v + r
            if s <= 0:
                raise NumericalError(f"non-positive innovation variance at step {t}")
            loglik += -0.5 * (LOG2PI + math.log(s) + (obs - m) ** 2 / s)
            k = v / s
            m = m + k * (obs - m)
            v = v * (1.0 - k)
            if v <= 0:
                raise NumericalError(f"non-positive filtered variance at step {t}")
        means[t] = m
        variances[t] = v
        if t + 1 < n and taus[t + 1] > 0.0:
            prec = 1.0 / v + taus[t + 1]
            v = 1.0 / prec
            m = v * (means[t] / variances[t] + taus[t + 1] * mus[t + 1])
        post_means[t] = m
        post_vars[t] = v
    return FilterResult(means=np.array(means), variances=np.array(variances),
                        loglik=loglik, post_means=np.array(post_means),
                        post_vars=np.array(post_vars), phi=phi,
                        offsets=np.array(offs), process_var=q)


def _smooth_core(fr: FilterResult) -> SmootherResult:
    n = len(fr.means)
    phi, q = fr.phi, fr.process_var
    fm = fr.post_means.tolist()
    fv = fr.post_vars.tolist()
    ms = [0.0] * n
    vs = [0.0] * n
    cross = [0.0] * max(0, n - 1)
    cond = [0.0] * n
    # the last node has no pseudo-observation, so filtered == post there
    ms[n - 1] = fr.means[n - 1]
    vs[n - 1] = fr.variances[n - 1]
    cond[n - 1] = fr.variances[n - 1]
    for t in range(n - 2, -1, -1):
        v_pred = phi * phi * fv[t] + q
        m_pred = phi * fm[t] + fr.offsets[t + 1]
        gain = fv[t] * phi / v_pred
        ms[t] = fm[t] + gain * (ms[t + 1] - m_pred)
        vs[t] = fv[t] + gain * gain * (vs[t + 1] - v_pred)
        if vs[t] <= 0:
            raise NumericalError(f"non-positive smoothed variance at step {t}")
        cross[t] = gain * vs[t + 1]
        cond[t] = fv[t] * q / v_pred if q > 0 else 0.0
    return SmootherResult(means=np.array(ms), variances=np.array(vs),
                          cross=np.array(cross), cond_vars=np.array(cond))


def kalman_filter(observations, inputs, params: SsmParams) -> FilterResult:
    """Standard scalar predict/update recursion.

    ``observations`` may contain None or NaN for missing hours; those
    steps skip the update and contribute nothing to the log-likelihood.
    """
    y = np.array([np.nan if v is None else float(v) for v in observations])
    inputs = np.asarray(inputs, dtype=float)
    if len(y) != len(inputs):
        raise ShapeError("observations and inputs must have equal length")
    if len(y) == 0:
        raise InsufficientData("empty observation sequence")
    offsets = params.offsets(inputs)
    return _filter_core(y, params.transition_coeff, offsets, params.process_var,
                        params.obs_var, params.init_mean, params.init_var)


def rts_smoother(filtered: FilterResult, params: SsmParams) -> SmootherResult:
    """Backward Rauch-Tung-Striebel pass over a filter result."""
    if abs(filtered.phi - params.transition_coeff) > 1e-12:
        raise ConfigError("params disagree with the filter result's transition")
    return _smooth_core(filtered)


# ---------------------------------------------------------------------------
# variational fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrayboxPriors:
    """Hyperparameters of the conjugate priors and fit bookkeeping."""

    gamma_shape: float = 1e-3
    gamma_rate: float = 1e-3
    init_state_mean: float = 20.0
    init_state_var: float = 100.0
    max_rows: int = 12000  # most recent 500 days at hourly resolution
    min_rows: int = 100


@dataclass(frozen=True)
class GrayboxPosterior:
    """Variational posterior over all 53 model parameters plus the
    smoothed state path and the per-iteration objective trace."""

    coeff_means: np.ndarray
    coeff_cov: np.ndarray
    process_precision: GammaFactor
    obs_precision: GammaFactor
    ard: tuple[GammaFactor, ...]
    state_means: np.ndarray
    state_vars: np.ndarray
    state_index: tuple[datetime, ...]
    elbo_trace: np.ndarray
    priors: GrayboxPriors
    n_rows: int

    def __post_init__(self) -> None:
        if self.coeff_means.shape != (N_COEFFS,) or self.coeff_cov.shape != (N_COEFFS, N_COEFFS):
            raise ShapeError("coefficient posterior has wrong shape")
        if len(self.ard) != N_COEFFS:
            raise ShapeError("need one ARD factor per coefficient")
        # 51 coefficients + 2 precisions = the model's 53 parameters
        assert N_COEFFS + 2 == N_PARAMS

    @property
    def coeffs(self) -> tuple[GaussianFactor, ...]:
        return tuple(GaussianFactor(float(m), float(v)) for m, v in
                     zip(self.coeff_means, np.diag(self.coeff_cov)))

    def expected_params(self) -> SsmParams:
        return SsmParams(
            supply_rate=float(self.coeff_means[0]),
            outdoor_rate=float(self.coeff_means[1]),
            solar_gain=float(self.coeff_means[2]),
            internal_gain_profile=self.coeff_means[3:].copy(),
            process_var=self.process_precision.mean_inverse,
            obs_var=self.obs_precision.mean_inverse,
            init_mean=self.priors.init_state_mean,
            init_var=self.priors.init_state_var,
        )


def _segments(hours: np.ndarray) -> list[tuple[int, int]]:
    """Half-open row ranges of maximal contiguous hourly runs."""
    breaks = np.nonzero(np.diff(hours) != 1)[0]
    starts = np.concatenate(([0], breaks + 1))
    stops = np.concatenate((breaks + 1, [len(hours)]))
    return [(int(a), int(b)) for a, b in zip(starts, stops)]


def _design_matrix(dataset: BuildingDataset, lo: int, hi: int) -> np.ndarray:
    """Rows [t_sup, t_out, ghi, onehot(slot)] for dataset rows [lo, hi)."""
    n = hi - lo
    a = np.zeros((n, N_COEFFS))
    a[:, 0] = dataset.t_sup[lo:hi]
    a[:, 1] = dataset.t_out[lo:hi]
    a[:, 2] = dataset.ghi[lo:hi]
    slots = np.array([hour_of_week_index(r.timestamp, dataset.site)
                      for r in dataset.records[lo:hi]], dtype=int)
    a[np.arange(n), 3 + slots - 1] = 1.0
    return a


class _FitWorkspace:
    """Mutable state of one coordinate-ascent run."""

    def __init__(self, dataset: BuildingDataset, priors: GrayboxPriors):
        n_total = len(dataset)
        lo = max(0, n_total - priors.max_rows)
        self.dataset = dataset
        self.lo = lo
        self.n = n_total - lo
        self.y = dataset.t_in[lo:].copy()
        self.segments = _segments(dataset.hours[lo:])
        self.A = _design_matrix(dataset, lo, n_total)
        self.d = np.zeros(N_COEFFS)
        self.d[0] = 1.0
        self.d[1] = 1.0
        # transition rows: global (workspace-relative) indices t with t-1 in
        # the same segment
        trans = []
        for a, b in self.segments:
            trans.extend(range(a + 1, b))
        self.trans = np.array(trans, dtype=int)
        self.n_trans = len(self.trans)
        self.ata = self.A[self.trans].T @ self.A[self.trans]
        self.priors = priors
        a0, b0 = priors.gamma_shape, priors.gamma_rate
        self.e_alpha = np.full(N_COEFFS, a0 / b0)
        self.eln_alpha = np.full(N_COEFFS, float(digamma(a0)) - math.log(b0))
        self.alpha_shape = np.full(N_COEFFS, a0)
        self.alpha_rate = np.full(N_COEFFS, b0)
        self.lp = GammaFactor(a0, b0)
        self.lo_ = GammaFactor(a0, b0)
        self.m = np.zeros(N_COEFFS)
        self.S = np.diag(1.0 / self.e_alpha)
        self.sm: list[SmootherResult] = []

    # -- state block ------------------------------------------------------
    def update_state(self) -> None:
        phi = 1.0 - float(self.d @ self.m)
        offsets = self.A @ self.m
        e_lp = self.lp.mean
        q = 1.0 / e_lp
        r = 1.0 / self.lo_.mean
        sd = self.S @ self.d
        dsd = float(self.d @ sd)
        dsa = self.A @ sd  # d' S a_t per row
        tau = np.zeros(self.n)
        mu = np.zeros(self.n)
        if dsd > 0:
            tau[self.trans] = e_lp * dsd
            mu[self.trans] = dsa[self.trans] / dsd
        self.sm = []
        for a, b in self.segments:
            fr = _filter_core(self.y[a:b], phi, offsets[a:b], q, r,
                              self.priors.init_state_mean, self.priors.init_state_var,
                              pseudo_prec=tau[a:b], pseudo_mean=mu[a:b])
            self.sm.append(_smooth_core(fr))

    def _state_moments(self):
        means = np.concatenate([s.means for s in self.sm])
        variances = np.concatenate([s.variances for s in self.sm])
        cross = np.zeros(self.n)  # cross[t] = Cov(x[t-1], x[t]) for transition rows
        for (a, b), s in zip(self.segments, self.sm):
            if b - a > 1:
                cross[a + 1:b] = s.cross
        return means, variances, cross

    # -- coefficient block --------------------------------------------------
    def update_coeffs(self) -> None:
        means, variances, cross = self._state_moments()
        t = self.trans
        xp = means[t - 1]
        vp = variances[t - 1]
        xc = means[t]
        cc = cross[t]
        at = self.A[t]
        u = at.T @ xp
        s2 = float(np.sum(xp * xp + vp))
        m2 = self.ata - np.outer(u, self.d) - np.outer(self.d, u) + s2 * np.outer(self.d, self.d)
        m2 = 0.5 * (m2 + m2.T)
        h = at.T @ (xc - xp) - self.d * float(np.sum(cc + xp * xc - xp * xp - vp))
        e_lp = self.lp.mean
        lam = np.diag(self.e_alpha) + e_lp * m2
        self.S = np.linalg.inv(lam)
        self.S = 0.5 * (self.S + self.S.T)
        self.m = self.S @ (e_lp * h)

    # -- residual moments shared by the precision update and the ELBO ------
    def _expected_residuals(self):
        means, variances, cross = self._state_moments()
        t = self.trans
        xp, vp, xc, vc, cc = means[t - 1], variances[t - 1], means[t], variances[t], cross[t]
        at = self.A[t]
        phi = 1.0 - float(self.d @ self.m)
        b_t = at @ self.m
        term1 = (xc - phi * xp - b_t) ** 2 + vc + phi * phi * vp - 2.0 * phi * cc
        sa = at @ self.S
        asa = np.einsum("ij,ij->i", sa, at)
        sd = self.S @ self.d
        dsa = at @ sd
        dsd = float(self.d @ sd)
        term2 = asa - 2.0 * dsa * xp + dsd * (xp * xp + vp)
        obs_sq = (self.y - means) ** 2 + variances
        return term1 + term2, obs_sq, means, variances

    def update_precisions(self) -> None:
        a0, b0 = self.priors.gamma_shape, self.priors.gamma_rate
        resid, obs_sq, _, _ = self._expected_residuals()
        self.lp = GammaFactor(a0 + 0.5 * self.n_trans, b0 + 0.5 * float(np.sum(resid)))
        self.lo_ = GammaFactor(a0 + 0.5 * self.n, b0 + 0.5 * float(np.sum(obs_sq)))

    def update_ard(self) -> None:
        a0, b0 = self.priors.gamma_shape, self.priors.gamma_rate
        e_c2 = self.m * self.m + np.diag(self.S)
        self.alpha_shape = np.full(N_COEFFS, a0 + 0.5)
        self.alpha_rate = b0 + 0.5 * e_c2
        self.e_alpha = self.alpha_shape / self.alpha_rate
        self.eln_alpha = digamma(self.alpha_shape) - np.log(self.alpha_rate)

    # -- objective ----------------------------------------------------------
    def elbo(self) -> float:
        a0, b0 = self.priors.gamma_shape, self.priors.gamma_rate
        resid, obs_sq, means, variances = self._expected_residuals()
        lp, lo_ = self.lp, self.lo_
        total = 0.0
        # observations
        total += 0.5 * self.n * (lo_.mean_log - LOG2PI)
        total -= 0.5 * lo_.mean * float(np.sum(obs_sq))
        # transitions
        total += 0.5 * self.n_trans * (lp.mean_log - LOG2PI)
        total -= 0.5 * lp.mean * float(np.sum(resid))
        # per-segment initial states
        m0, v0 = self.priors.init_state_mean, self.priors.init_state_var
        for a, _ in self.segments:
            total += -0.5 * (LOG2PI + math.log(v0))
            total -= ((means[a] - m0) ** 2 + variances[a]) / (2.0 * v0)
        # coefficients under ARD
        e_c2 = self.m * self.m + np.diag(self.S)
        total += 0.5 * float(np.sum(self.eln_alpha)) - 0.5 * N_COEFFS * LOG2PI
        total -= 0.5 * float(np.sum(self.e_alpha * e_c2))
        # Gamma priors on ARD precisions and the two noise precisions
        gamma_prior_const = a0 * math.log(b0) - float(gammaln(a0))
        total += float(np.sum(gamma_prior_const + (a0 - 1.0) * self.eln_alpha
                              - b0 * self.e_alpha))
        for g in (lp, lo_):
            total += gamma_prior_const + (a0 - 1.0) * g.mean_log - b0 * g.mean
        # entropies
        cond = np.concatenate([s.cond_vars for s in self.sm])
        total += 0.5 * float(np.sum(np.log(2.0 * math.pi * math.e * cond)))
        sign, logdet = np.linalg.slogdet(self.S)
        if sign <= 0:
            raise NumericalError("coefficient covariance lost positive definiteness")
        total += 0.5 * N_COEFFS * (1.0 + LOG2PI) + 0.5 * logdet
        total += sum(GammaFactor(s, r).entropy for s, r in
                     zip(self.alpha_shape, self.alpha_rate))
        total += lp.entropy + lo_.entropy
        return total


def fit_variational(dataset: BuildingDataset, priors: GrayboxPriors | None = None,
                    max_iters: int = 200, tol: float = 1e-8) -> GrayboxPosterior:
    """Mean-field coordinate ascent over states, coefficients, precisions,
    and ARD hyperpriors.

    Stops when the relative objective change falls below ``tol`` (judged
    against a baseline evaluated at initialization, so ``tol=inf`` returns
    after one iteration) or after ``max_iters``. Raises ConvergenceError
    if the objective ever falls by more than 1e-6 relative: coordinate
    ascent on conjugate blocks cannot do that, so a drop means a bug.
    """
    priors = priors or GrayboxPriors()
    ws = _FitWorkspace(dataset, priors)
    if ws.n < priors.min_rows:
        raise InsufficientData(f"need at least {priors.min_rows} rows, have {ws.n}")
    ws.update_state()
    prev = ws.elbo()
    trace: list[float] = []
    for _ in range(max_iters):
        ws.update_state()
        ws.update_coeffs()
        ws.update_precisions()
        ws.update_ard()
        value = ws.elbo()
        trace.append(value)
        scale = max(1.0, abs(prev))
        if value < prev - 1e-6 * scale:
            raise ConvergenceError(
                f"objective decreased from {prev:.6f} to {value:.6f}")
        if abs(value - prev) < tol * scale:
            prev = value
            break
        prev = value
    means, variances, _ = ws._state_moments()
    index = tuple(r.timestamp for r in dataset.records[ws.lo:])
    return GrayboxPosterior(
        coeff_means=ws.m.copy(), coeff_cov=ws.S.copy(),
        process_precision=ws.lp, obs_precision=ws.lo_,
        ard=tuple(GammaFactor(float(s), float(r))
                  for s, r in zip(ws.alpha_shape, ws.alpha_rate)),
        state_means=means, state_vars=variances, state_index=index,
        elbo_trace=np.array(trace), priors=priors, n_rows=ws.n)


# ---------------------------------------------------------------------------
# forecasting
# ---------------------------------------------------------------------------

def forecast(posterior: GrayboxPosterior, last_state: GaussianFactor,
             future: ExogenousInputs) -> ForecastResult:
    """Roll the expected-coefficient recurrence H steps forward.

    Parameter uncertainty is not propagated; per-step std combines the
    propagated state variance with the expected observation variance.
    """
    if future.horizon < 1:
        raise InsufficientData("forecast horizon must be >= 1")
    params = posterior.expected_params()
    phi = params.transition_coeff
    inputs = np.column_stack([future.t_sup, future.t_out, future.ghi,
                              future.hour_of_week])
    offsets = params.offsets(inputs)
    obs_var = params.obs_var
    m, v = last_state.mean, last_state.variance
    mean = np.empty(future.horizon)
    step_std = np.empty(future.horizon)
    for j in range(future.horizon):
        m = phi * m + offsets[j]
        v = phi * phi * v + params.process_var
        mean[j] = m
        step_std[j] = math.sqrt(v + obs_var)
    return ForecastResult(mean=mean, step_std=step_std,
                          cum_std=np.cumsum(step_std), n_samples=1)


def filtered_state_at(posterior: GrayboxPosterior, dataset: BuildingDataset,
                      instant: datetime, history_rows: int = 336) -> GaussianFactor:
    """Filter the contiguous history ending at ``instant`` and return the
    state marginal there."""
    row = dataset.row_at(instant)
    if row is None:
        raise InsufficientHistory(f"no record at {instant.isoformat()}")
    lo = row
    while lo > 0 and row - lo < history_rows - 1 \
            and dataset.hours[lo - 1] == dataset.hours[lo] - 1:
        lo -= 1
    params = posterior.expected_params()
    inputs = np.column_stack([
        dataset.t_sup[lo:row + 1], dataset.t_out[lo:row + 1], dataset.ghi[lo:row + 1],
        [hour_of_week_index(r.timestamp, dataset.site)
         for r in dataset.records[lo:row + 1]]])
    fr = kalman_filter(dataset.t_in[lo:row + 1], inputs, params)
    return GaussianFactor(float(fr.means[-1]), float(fr.variances[-1]))


# ---------------------------------------------------------------------------
# checkpoint I/O
# ---------------------------------------------------------------------------

def save_checkpoint(posterior: GrayboxPosterior, path: str | Path) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "graybox",
        "coeff_means": posterior.coeff_means.tolist(),
        "coeff_cov": posterior.coeff_cov.tolist(),
        "process_precision": {"shape": posterior.process_precision.shape,
                              "rate": posterior.process_precision.rate},
        "obs_precision": {"shape": posterior.obs_precision.shape,
                          "rate": posterior.obs_precision.rate},
        "ard": [[g.shape, g.rate] for g in posterior.ard],
        "elbo_trace": posterior.elbo_trace.tolist(),
        "priors": {
            "gamma_shape": posterior.priors.gamma_shape,
            "gamma_rate": posterior.priors.gamma_rate,
            "init_state_mean": posterior.priors.init_state_mean,
            "init_state_var": posterior.priors.init_state_var,
            "max_rows": posterior.priors.max_rows,
            "min_rows": posterior.priors.min_rows,
        },
        "n_rows": posterior.n_rows,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> GrayboxPosterior:
    raw = json.loads(Path(path).read_text())
    if raw.get("kind") != "graybox" or raw.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: not a compatible gray-box checkpoint")
    priors = GrayboxPriors(**raw["priors"])
    return GrayboxPosterior(
        coeff_means=np.array(raw["coeff_means"]),
        coeff_cov=np.array(raw["coeff_cov"]),
        process_precision=GammaFactor(**raw["process_precision"]),
        obs_precision=GammaFactor(**raw["obs_precision"]),
        ard=tuple(GammaFactor(s, r) for s, r in raw["ard"]),
        state_means=np.zeros(0), state_vars=np.zeros(0), state_index=(),
        elbo_trace=np.array(raw["elbo_trace"]), priors=priors,
        n_rows=int(raw["n_rows"]))
