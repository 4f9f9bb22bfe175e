"""LSTM encoder with an MLP head, in deterministic and partially
stochastic variants.

The deterministic variant trains all parameters as point values under a
mean-absolute-error loss. The stochastic variant keeps the LSTM and the
output layer deterministic but gives the first linear layer a mean-field
Gaussian posterior, trained by minimizing mean L1 error plus a weighted
closed-form KL divergence to an isotropic Gaussian prior; one posterior
realization is drawn per training instance per epoch.

Training builds an autodiff graph (full batch); prediction runs a plain
numpy forward. The two paths are independent implementations of the same
composition and are cross-checked in the test suite.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import AdamState, Tensor, adam_step
from .data import HourlyRecord, hour_number, hour_of_week_index
from .errors import (ConfigError, DivergenceError, DomainError, InsufficientData,
                     InsufficientHistory, NumericalError, ShapeError)
from .features import (FeatureScaler, HOUR_OF_WEEK_COLUMN, N_FEATURES, SupervisedSet,
                       WINDOW_LENGTH)
from .forecast import ExogenousInputs, ForecastResult
from .solar import solar_position

KIND_DETERMINISTIC = "lstm-mlp"
KIND_STOCHASTIC = "lstm-bnn"
MODEL_KINDS = (KIND_DETERMINISTIC, KIND_STOCHASTIC)
CHECKPOINT_VERSION = 1

_GATES = ("f", "i", "q", "o")


def softplus_inverse(value: float) -> float:
    return math.log(math.expm1(value))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


@dataclass
class LstmParams:
    """Gate weights: w_x* are (hidden, features), w_h* are (hidden, hidden),
    biases are (hidden,)."""

    w_xf: np.ndarray
    w_xi: np.ndarray
    w_xq: np.ndarray
    w_xo: np.ndarray
    w_hf: np.ndarray
    w_hi: np.ndarray
    w_hq: np.ndarray
    w_ho: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_q: np.ndarray
    b_o: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.w_xf.shape[0]

    @property
    def n_features(self) -> int:
        return self.w_xf.shape[1]


@dataclass
class MlpParams:
    """Two linear layers with a ReLU in between; layer widths follow the
    hidden / hidden/2 / 1 pattern."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class VariationalLayer:
    """Mean-field Gaussian posterior over the first linear layer.

    Spreads are stored through a softplus parameterization (rho) so they
    stay positive under gradient steps.
    """

    mu_w: np.ndarray
    mu_b: np.ndarray
    rho_w: np.ndarray
    rho_b: np.ndarray
    prior_variance: float

    @property
    def sigma_w(self) -> np.ndarray:
        return _softplus(self.rho_w)

    @property
    def sigma_b(self) -> np.ndarray:
        return _softplus(self.rho_b)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    epochs=None resolves to 400 for the deterministic model and 800 for
    the stochastic one. The learning rate is halved at 50%, 75%, and 90%
    of the epoch budget unless explicit milestones are given.
    """

    epochs: int | None = None
    learning_rate: float = 1e-4
    kl_weight: float = 1e-3
    prior_variance: float = 1e-3
    hidden_dim: int = 64
    seed: int = 0
    lr_milestones: tuple[int, ...] | None = None
    freeze_sigma: bool = False
    init_sigma: float = 1e-3

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.prior_variance <= 0:
            raise ConfigError("prior_variance must be > 0")
        if self.kl_weight < 0:
            raise ConfigError("kl_weight must be >= 0")
        if self.hidden_dim < 2 or self.hidden_dim % 2:
            raise ConfigError("hidden_dim must be an even integer >= 2")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr_milestones is not None:
            ms = tuple(self.lr_milestones)
            if any(b <= a for a, b in zip(ms, ms[1:])):
                raise ConfigError("lr_milestones must be strictly increasing")
            object.__setattr__(self, "lr_milestones", ms)
        if self.init_sigma <= 0:
            raise ConfigError("init_sigma must be > 0")

    @classmethod
    def paper_profile(cls, **overrides) -> "TrainConfig":
        """Full-size profile: 1024 hidden units, production epoch budget."""
        return cls(**{"hidden_dim": 1024, **overrides})

    def resolved_epochs(self, kind: str) -> int:
        if self.epochs is not None:
            return self.epochs
        return 800 if kind == KIND_STOCHASTIC else 400

    def resolved_milestones(self, kind: str) -> tuple[int, ...]:
        if self.lr_milestones is not None:
            return self.lr_milestones
        e = self.resolved_epochs(kind)
        return tuple(sorted({math.ceil(0.5 * e), math.ceil(0.75 * e),
                             math.ceil(0.9 * e)}))


@dataclass
class TrainedModel:
    """A trained model plus everything needed to reproduce and apply it."""

    kind: str
    lstm: LstmParams
    mlp: MlpParams | None
    vlayer: VariationalLayer | None
    out_w: np.ndarray | None
    out_b: np.ndarray | None
    scaler: FeatureScaler
    config: TrainConfig
    train_trace: np.ndarray
    val_trace: np.ndarray
    best_epoch: int
    best_val_loss: float
    final_kl: float | None

    @property
    def hidden_dim(self) -> int:
        return self.lstm.hidden_dim


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------

def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_parameters(kind: str, config: TrainConfig, rng: np.random.Generator,
                    n_features: int = N_FEATURES) -> dict[str, np.ndarray]:
    """Fresh parameter arrays keyed by name.

    LSTM and output-layer weights are uniform in +-1/sqrt(fan_in); the
    stochastic first layer starts at mean zero with sigma = init_sigma.
    """
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    d = config.hidden_dim
    half = d // 2
    params: dict[str, np.ndarray] = {}
    for gate in _GATES:
        params[f"w_x{gate}"] = _uniform(rng, (d, n_features), n_features)
        params[f"w_h{gate}"] = _uniform(rng, (d, d), d)
        params[f"b_{gate}"] = _uniform(rng, (d,), d)
    if kind == KIND_DETERMINISTIC:
        params["w1"] = _uniform(rng, (half, d), d)
        params["b1"] = _uniform(rng, (half,), d)
    else:
        rho0 = softplus_inverse(config.init_sigma)
        params["mu_w"] = np.zeros((half, d))
        params["mu_b"] = np.zeros(half)
        params["rho_w"] = np.full((half, d), rho0)
        params["rho_b"] = np.full(half, rho0)
    params["w2"] = _uniform(rng, (1, half), half)
    params["b2"] = _uniform(rng, (1,), half)
    return params


def _model_from_params(kind: str, params: dict[str, np.ndarray], config: TrainConfig,
                       scaler: FeatureScaler, train_trace, val_trace,
                       best_epoch: int, best_val_loss: float,
                       final_kl: float | None) -> TrainedModel:
    lstm = LstmParams(**{k: params[k] for k in
                         [f"w_x{g}" for g in _GATES] + [f"w_h{g}" for g in _GATES]
                         + [f"b_{g}" for g in _GATES]})
    if kind == KIND_DETERMINISTIC:
        mlp = MlpParams(w1=params["w1"], b1=params["b1"],
                        w2=params["w2"], b2=params["b2"])
        vlayer, out_w, out_b = None, None, None
    else:
        mlp = None
        vlayer = VariationalLayer(mu_w=params["mu_w"], mu_b=params["mu_b"],
                                  rho_w=params["rho_w"], rho_b=params["rho_b"],
                                  prior_variance=config.prior_variance)
        out_w, out_b = params["w2"], params["b2"]
    return TrainedModel(kind=kind, lstm=lstm, mlp=mlp, vlayer=vlayer,
                        out_w=out_w, out_b=out_b, scaler=scaler, config=config,
                        train_trace=np.asarray(train_trace),
                        val_trace=np.asarray(val_trace), best_epoch=best_epoch,
                        best_val_loss=best_val_loss, final_kl=final_kl)


# ---------------------------------------------------------------------------
# graph forward (training path)
# ---------------------------------------------------------------------------

def _lstm_hidden_graph(x: Tensor, p: dict[str, Tensor]) -> Tensor:
    """Final hidden state for a batch of windows, shape (N, hidden).

    The four gate weight matrices are concatenated so each step costs two
    matmuls instead of eight; the math is identical to the per-gate form.
    """
    n, seq_len, _ = x.shape
    hidden = p["w_xf"].shape[0]
    h = Tensor(np.zeros((n, hidden)))
    c = Tensor(np.zeros((n, hidden)))
    wx = ag.transpose(ag.concat([p[f"w_x{g}"] for g in _GATES], axis=0))
    wh = ag.transpose(ag.concat([p[f"w_h{g}"] for g in _GATES], axis=0))
    bias = ag.concat([p[f"b_{g}"] for g in _GATES])
    for t in range(seq_len):
        pre = ag.matmul(x[:, t, :], wx) + ag.matmul(h, wh) + bias
        f = ag.sigmoid(pre[:, 0:hidden])
        i = ag.sigmoid(pre[:, hidden:2 * hidden])
        q = ag.tanh(pre[:, 2 * hidden:3 * hidden])
        o = ag.sigmoid(pre[:, 3 * hidden:4 * hidden])
        c = f * c + i * q
        h = o * ag.tanh(c)
    return h


def _kl_graph(p: dict[str, Tensor], prior_variance: float) -> Tensor:
    """Closed-form KL(q || prior) of the stochastic layer as a graph node."""
    mu = ag.concat([ag.reshape(p["mu_w"], (-1,)), p["mu_b"]])
    sigma = ag.concat([ag.reshape(ag.softplus(p["rho_w"]), (-1,)),
                       ag.softplus(p["rho_b"])])
    n = mu.shape[0]
    beta = math.sqrt(prior_variance)
    quad = (ag.sum_all(sigma * sigma) + ag.sum_all(mu * mu)) * (1.0 / (2.0 * prior_variance))
    return ag.sum_all(ag.neg(ag.log(sigma))) + quad + n * (math.log(beta) - 0.5)


def training_loss(kind: str, p: dict[str, Tensor], x_norm: np.ndarray,
                  targets: np.ndarray, kl_weight: float, prior_variance: float,
                  noise: np.ndarray | None = None) -> tuple[Tensor, float | None]:
    """Full-batch loss graph: mean L1 error, plus the weighted KL term for
    the stochastic variant. ``noise`` carries the per-instance standard
    normal draws for the stochastic layer and must be (N, hidden/2).

    The objective is the negated evidence bound divided by the sample
    count: one KL penalty is weighed against the summed per-sample errors,
    so here the KL term carries kl_weight / N. Keeping the division makes
    the data-misfit/regularization balance independent of dataset size
    while gradient magnitudes stay per-sample scaled.
    """
    n = x_norm.shape[0]
    x = Tensor(x_norm)
    h = _lstm_hidden_graph(x, p)
    if kind == KIND_DETERMINISTIC:
        a1 = ag.relu(ag.matmul(h, ag.transpose(p["w1"])) + p["b1"])
    else:
        if noise is None:
            raise ShapeError("stochastic training loss needs a noise array")
        half = p["mu_w"].shape[0]
        if noise.shape != (n, half):
            raise ShapeError(f"noise must be ({n}, {half}), got {noise.shape}")
        mean1 = ag.matmul(h, ag.transpose(p["mu_w"])) + p["mu_b"]
        sig_w = ag.softplus(p["rho_w"])
        sig_b = ag.softplus(p["rho_b"])
        var1 = ag.matmul(h * h, ag.transpose(sig_w * sig_w)) + sig_b * sig_b
        a1 = ag.relu(mean1 + ag.sqrt(var1) * Tensor(noise))
    pred = ag.reshape(ag.matmul(a1, ag.transpose(p["w2"])) + p["b2"], (-1,))
    l1 = ag.abs_sum(pred - Tensor(targets)) * (1.0 / n)
    if kind == KIND_DETERMINISTIC:
        return l1, None
    kl = _kl_graph(p, prior_variance)
    return l1 + (kl_weight / n) * kl, kl.item()


# ---------------------------------------------------------------------------
# numpy forward (inference path)
# ---------------------------------------------------------------------------

def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_forward(window: np.ndarray, lstm: LstmParams) -> np.ndarray:
    """Run the gate recursions over one (L, M) window; returns the final
    hidden state. Cell and hidden states start at zero."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[1] != lstm.n_features:
        raise ShapeError(f"window must be (L, {lstm.n_features}), got {window.shape}")
    d = lstm.hidden_dim
    h = np.zeros(d)
    c = np.zeros(d)
    wx = np.concatenate([getattr(lstm, f"w_x{g}") for g in _GATES], axis=0)
    wh = np.concatenate([getattr(lstm, f"w_h{g}") for g in _GATES], axis=0)
    bias = np.concatenate([getattr(lstm, f"b_{g}") for g in _GATES])
    for t in range(window.shape[0]):
        pre = wx @ window[t] + wh @ h + bias
        f = _sigmoid_np(pre[:d])
        i = _sigmoid_np(pre[d:2 * d])
        q = np.tanh(pre[2 * d:3 * d])
        o = _sigmoid_np(pre[3 * d:])
        c = f * c + i * q
        h = o * np.tanh(c)
    return h


def forward_deterministic(window: np.ndarray, lstm: LstmParams, mlp: MlpParams) -> float:
    h = lstm_forward(window, lstm)
    a1 = np.maximum(mlp.w1 @ h + mlp.b1, 0.0)
    return float((mlp.w2 @ a1 + mlp.b2)[0])


def sample_weights(vlayer: VariationalLayer,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One reparameterized draw of the stochastic layer: mu + sigma * eps."""
    w = vlayer.mu_w + vlayer.sigma_w * rng.standard_normal(vlayer.mu_w.shape)
    b = vlayer.mu_b + vlayer.sigma_b * rng.standard_normal(vlayer.mu_b.shape)
    return w, b


def forward_stochastic(window: np.ndarray, lstm: LstmParams, vlayer: VariationalLayer,
                       out_w: np.ndarray, out_b: np.ndarray,
                       rng: np.random.Generator) -> float:
    """One stochastic forward pass with a fresh weight realization."""
    w1, b1 = sample_weights(vlayer, rng)
    h = lstm_forward(window, lstm)
    a1 = np.maximum(w1 @ h + b1, 0.0)
    return float((out_w @ a1 + out_b)[0])


def predict_delta(model: TrainedModel, window: np.ndarray,
                  rng: np.random.Generator | None = None) -> float:
    if model.kind == KIND_DETERMINISTIC:
        return forward_deterministic(window, model.lstm, model.mlp)
    if rng is None:
        raise ConfigError("stochastic prediction needs an rng")
    return forward_stochastic(window, model.lstm, model.vlayer,
                              model.out_w, model.out_b, rng)


def _batched_hidden_np(x: np.ndarray, p: dict[str, np.ndarray]) -> np.ndarray:
    """Final hidden states for (N, L, M) windows without building a graph."""
    n, seq_len, _ = x.shape
    d = p["w_xf"].shape[0]
    h = np.zeros((n, d))
    c = np.zeros((n, d))
    wx = np.concatenate([p[f"w_x{g}"] for g in _GATES], axis=0).T
    wh = np.concatenate([p[f"w_h{g}"] for g in _GATES], axis=0).T
    bias = np.concatenate([p[f"b_{g}"] for g in _GATES])
    for t in range(seq_len):
        pre = x[:, t, :] @ wx + h @ wh + bias
        f = _sigmoid_np(pre[:, :d])
        i = _sigmoid_np(pre[:, d:2 * d])
        q = np.tanh(pre[:, 2 * d:3 * d])
        o = _sigmoid_np(pre[:, 3 * d:])
        c = f * c + i * q
        h = o * np.tanh(c)
    return h


def _kl_np(p: dict[str, np.ndarray], prior_variance: float) -> float:
    sigma = np.concatenate([_softplus(p["rho_w"]).ravel(), _softplus(p["rho_b"])])
    mu = np.concatenate([p["mu_w"].ravel(), p["mu_b"]])
    beta = math.sqrt(prior_variance)
    return float(np.sum(np.log(beta / sigma)
                        + (sigma ** 2 + mu ** 2) / (2.0 * prior_variance) - 0.5))


def _objective_np(kind: str, p: dict[str, np.ndarray], x: np.ndarray, y: np.ndarray,
                  kl_weight: float, prior_variance: float,
                  noise: np.ndarray | None) -> tuple[float, float | None]:
    """Same objective as ``training_loss`` evaluated without a graph; used
    for the per-epoch validation pass."""
    h = _batched_hidden_np(x, p)
    if kind == KIND_DETERMINISTIC:
        a1 = np.maximum(h @ p["w1"].T + p["b1"], 0.0)
        pred = (a1 @ p["w2"].T + p["b2"]).ravel()
        return float(np.mean(np.abs(pred - y))), None
    sig_w = _softplus(p["rho_w"])
    sig_b = _softplus(p["rho_b"])
    mean1 = h @ p["mu_w"].T + p["mu_b"]
    var1 = (h * h) @ (sig_w * sig_w).T + sig_b * sig_b
    a1 = np.maximum(mean1 + np.sqrt(var1) * noise, 0.0)
    pred = (a1 @ p["w2"].T + p["b2"]).ravel()
    kl = _kl_np(p, prior_variance)
    return float(np.mean(np.abs(pred - y)) + (kl_weight / len(y)) * kl), kl


def kl_gaussian(vlayer: VariationalLayer) -> float:
    """KL(q || p) between the mean-field posterior and the isotropic prior,
    summed over all stochastic-layer entries."""
    beta2 = vlayer.prior_variance
    if beta2 <= 0:
        raise DomainError("prior variance must be > 0")
    sigma = np.concatenate([vlayer.sigma_w.ravel(), vlayer.sigma_b.ravel()])
    mu = np.concatenate([vlayer.mu_w.ravel(), vlayer.mu_b.ravel()])
    if np.any(sigma <= 0):
        raise DomainError("sigma must be > 0")
    beta = math.sqrt(beta2)
    return float(np.sum(np.log(beta / sigma) + (sigma ** 2 + mu ** 2) / (2.0 * beta2) - 0.5))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def train(kind: str, train_set: SupervisedSet, val_set: SupervisedSet,
          config: TrainConfig,
          init_arrays: dict[str, np.ndarray] | None = None) -> TrainedModel:
    """Full-batch training with per-epoch validation and best-snapshot
    selection.

    Each epoch: one loss evaluation on the training set (the stochastic
    variant draws one posterior realization per training instance), one
    Adam step, then the validation loss with fresh draws on the updated
    parameters. The returned model carries the parameters of the epoch
    with the lowest validation loss.
    """
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    if len(train_set) == 0 or len(val_set) == 0:
        raise InsufficientData("both partitions must be non-empty")
    rng = np.random.default_rng(config.seed)
    n_features = train_set.inputs.shape[2]
    if init_arrays is None:
        params = init_parameters(kind, config, rng, n_features)
    else:
        params = {k: np.array(v, dtype=float) for k, v in init_arrays.items()}
    tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
    trainable = [k for k in params
                 if not (config.freeze_sigma and k.startswith("rho_"))]
    opt_params = {k: params[k] for k in trainable}
    state = AdamState.init(opt_params)

    x_train = train_set.scaler.transform(train_set.inputs)
    x_val = train_set.scaler.transform(val_set.inputs)
    y_train = train_set.targets
    y_val = val_set.targets
    half = config.hidden_dim // 2

    epochs = config.resolved_epochs(kind)
    milestones = config.resolved_milestones(kind)
    train_trace = np.empty(epochs)
    val_trace = np.empty(epochs)
    best_val = math.inf
    best_epoch = -1
    best_snapshot: dict[str, np.ndarray] = {}
    final_kl: float | None = None

    for epoch in range(1, epochs + 1):
        lr = config.learning_rate * 0.5 ** sum(epoch >= m for m in milestones)
        try:
            noise = rng.standard_normal((len(y_train), half)) \
                if kind == KIND_STOCHASTIC else None
            loss, _ = training_loss(kind, tensors, x_train, y_train,
                                    config.kl_weight, config.prior_variance, noise)
            ag.zero_grads(tensors.values())
            ag.backward(loss)
            grads = {k: tensors[k].gradient() for k in trainable}
            adam_step(opt_params, grads, state, lr)

            val_noise = rng.standard_normal((len(y_val), half)) \
                if kind == KIND_STOCHASTIC else None
            val_loss, kl_value = _objective_np(kind, params, x_val, y_val,
                                               config.kl_weight, config.prior_variance,
                                               val_noise)
        except NumericalError as exc:
            raise DivergenceError(f"training diverged at epoch {epoch}: {exc}") from None
        if not (math.isfinite(loss.item()) and math.isfinite(val_loss)):
            raise DivergenceError(f"non-finite loss at epoch {epoch}")
        train_trace[epoch - 1] = loss.item()
        val_trace[epoch - 1] = val_loss
        final_kl = kl_value
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_snapshot = {k: v.copy() for k, v in params.items()}

    return _model_from_params(kind, best_snapshot, config, train_set.scaler,
                              train_trace, val_trace, best_epoch, best_val, final_kl)


# ---------------------------------------------------------------------------
# autoregressive rollout
# ---------------------------------------------------------------------------

def rollout(model: TrainedModel, history: list[HourlyRecord] | tuple[HourlyRecord, ...],
            future: ExogenousInputs, site, n_samples: int = 1,
            rng: np.random.Generator | None = None) -> ForecastResult:
    """Roll the model forward H steps, feeding its own indoor-temperature
    predictions back into the feature windows.

    ``history`` must hold at least L+1 contiguous records ending at the
    forecast origin; ``future`` supplies the exogenous drivers for the H
    steps ahead. The stochastic variant draws a fresh weight realization
    at every step of every trajectory.
    """
    seq_len = WINDOW_LENGTH
    if len(history) < seq_len + 1:
        raise InsufficientHistory(
            f"need at least {seq_len + 1} history records, have {len(history)}")
    recent = list(history)[-(seq_len + 1):]
    hours = [hour_number(r.timestamp) for r in recent]
    if any(b - a != 1 for a, b in zip(hours, hours[1:])):
        raise InsufficientHistory("history records must be contiguous hours")
    horizon = future.horizon
    if horizon < 1:
        raise InsufficientData("forecast horizon must be >= 1")
    if model.kind == KIND_STOCHASTIC and rng is None:
        raise ConfigError("stochastic rollout needs an rng")
    if model.kind == KIND_DETERMINISTIC:
        n_samples = 1

    window_recs = recent[-seq_len:]
    lat, lon = site.latitude, site.longitude
    # exogenous drivers over the window hours plus the horizon
    t_sup = np.concatenate([[r.t_sup for r in window_recs], future.t_sup])
    t_out = np.concatenate([[r.t_out for r in window_recs], future.t_out])
    ghi = np.concatenate([[r.ghi for r in window_recs], future.ghi])
    elev = np.empty(seq_len + horizon)
    azi = np.empty(seq_len + horizon)
    slot = np.empty(seq_len + horizon)
    for k, r in enumerate(window_recs):
        pos = solar_position(r.timestamp, lat, lon)
        elev[k], azi[k] = pos.elevation, pos.azimuth
        slot[k] = hour_of_week_index(r.timestamp, site)
    elev[seq_len:] = future.sun_elevation
    azi[seq_len:] = future.sun_azimuth
    slot[seq_len:] = future.hour_of_week
    measured_tin = np.array([r.t_in for r in window_recs])

    paths = np.empty((n_samples, horizon))
    for s in range(n_samples):
        tin = np.concatenate([measured_tin, np.zeros(horizon)])
        for j in range(horizon):
            end = seq_len + j  # window covers driver rows [j, end)
            rows = np.empty((seq_len, N_FEATURES))
            rows[:, 0] = t_sup[j:end] - tin[j:end]
            rows[:, 1] = t_out[j:end] - tin[j:end]
            rows[:, 2] = ghi[j:end]
            rows[:, 3] = elev[j:end]
            rows[:, 4] = azi[j:end]
            rows[:, HOUR_OF_WEEK_COLUMN] = slot[j:end]
            delta = predict_delta(model, model.scaler.transform(rows), rng)
            tin[end] = tin[end - 1] + delta
        paths[s] = tin[seq_len:]

    mean = paths.mean(axis=0)
    step_std = paths.std(axis=0)
    return ForecastResult(mean=mean, step_std=step_std,
                          cum_std=np.cumsum(step_std), n_samples=n_samples)


# ---------------------------------------------------------------------------
# checkpoint I/O
# ---------------------------------------------------------------------------

def save_checkpoint(model: TrainedModel, path: str | Path) -> None:
    payload: dict = {
        "format_version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "hidden_dim": model.hidden_dim,
        "lstm": {k: getattr(model.lstm, k).tolist() for k in (
            "w_xf", "w_xi", "w_xq", "w_xo", "w_hf", "w_hi", "w_hq", "w_ho",
            "b_f", "b_i", "b_q", "b_o")},
        "scaler": {"mean": model.scaler.mean.tolist(),
                   "std": model.scaler.std.tolist()},
        "config": {
            "epochs": model.config.epochs,
            "learning_rate": model.config.learning_rate,
            "kl_weight": model.config.kl_weight,
            "prior_variance": model.config.prior_variance,
            "hidden_dim": model.config.hidden_dim,
            "seed": model.config.seed,
            "lr_milestones": list(model.config.lr_milestones)
            if model.config.lr_milestones else None,
            "freeze_sigma": model.config.freeze_sigma,
            "init_sigma": model.config.init_sigma,
        },
        "best_epoch": model.best_epoch,
        "best_val_loss": model.best_val_loss,
        "final_kl": model.final_kl,
    }
    if model.kind == KIND_DETERMINISTIC:
        payload["mlp"] = {k: getattr(model.mlp, k).tolist()
                          for k in ("w1", "b1", "w2", "b2")}
    else:
        payload["vlayer"] = {
            "mu_w": model.vlayer.mu_w.tolist(),
            "mu_b": model.vlayer.mu_b.tolist(),
            "sigma_w": model.vlayer.sigma_w.tolist(),
            "sigma_b": model.vlayer.sigma_b.tolist(),
            "prior_variance": model.vlayer.prior_variance,
        }
        payload["out_w"] = model.out_w.tolist()
        payload["out_b"] = model.out_b.tolist()
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> TrainedModel:
    raw = json.loads(Path(path).read_text())
    if raw.get("format_version") != CHECKPOINT_VERSION or raw.get("kind") not in MODEL_KINDS:
        raise ConfigError(f"{path}: not a compatible model checkpoint")
    cfg_raw = dict(raw["config"])
    if cfg_raw.get("lr_milestones") is not None:
        cfg_raw["lr_milestones"] = tuple(cfg_raw["lr_milestones"])
    config = TrainConfig(**cfg_raw)
    lstm = LstmParams(**{k: np.array(v) for k, v in raw["lstm"].items()})
    scaler = FeatureScaler(mean=np.array(raw["scaler"]["mean"]),
                           std=np.array(raw["scaler"]["std"]))
    kind = raw["kind"]
    if kind == KIND_DETERMINISTIC:
        mlp = MlpParams(**{k: np.array(v) for k, v in raw["mlp"].items()})
        vlayer, out_w, out_b = None, None, None
    else:
        v = raw["vlayer"]
        sigma_w = np.array(v["sigma_w"])
        sigma_b = np.array(v["sigma_b"])
        vlayer = VariationalLayer(
            mu_w=np.array(v["mu_w"]), mu_b=np.array(v["mu_b"]),
            rho_w=np.log(np.expm1(sigma_w)), rho_b=np.log(np.expm1(sigma_b)),
            prior_variance=float(v["prior_variance"]))
        mlp = None
        out_w = np.array(raw["out_w"])
        out_b = np.array(raw["out_b"])
    return TrainedModel(kind=kind, lstm=lstm, mlp=mlp, vlayer=vlayer,
                        out_w=out_w, out_b=out_b, scaler=scaler, config=config,
                        train_trace=np.zeros(0), val_trace=np.zeros(0),
                        best_epoch=int(raw["best_epoch"]),
                        best_val_loss=float(raw["best_val_loss"]),
                        final_kl=raw["final_kl"])
