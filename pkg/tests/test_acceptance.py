"""Verification suite: one test per acceptance criterion, each printing a
pass/fail line with its measured evidence.

Run with ``pytest tests/test_acceptance.py -v -s``. The expensive fixtures
(gray-box recovery fits, the 10-building ranking study, the prior sweep)
are session-scoped and shared across the criteria that consume them.
"""
import json
import math
import time
from dataclasses import dataclass

import numpy as np
import pytest
from scipy.stats import spearmanr

from heatcast import autograd as ag
from heatcast.autograd import Tensor
from heatcast.cli import EXIT_OK, main
from heatcast.data import SiteMeta
from heatcast.evaluate import (WeightProfile, drift_curve, horizon_rmse,
                               one_step_uncertainty, prediction_matrix, prior_sweep,
                               select_test_instants, weighted_score,
                               _split_for_protocol)
from heatcast.features import build_supervised, chronological_split
from heatcast.graybox import GrayboxPriors, fit_variational, kalman_filter, rts_smoother
from heatcast.models import (KIND_DETERMINISTIC, KIND_STOCHASTIC, TrainConfig,
                             VariationalLayer, init_parameters, kl_gaussian,
                             softplus_inverse, train, training_loss)
from heatcast.simulate import SimConfig, simulate_building

from test_autograd import check_gradients
from test_kalman import joint_gaussian_oracle, random_inputs, random_params


def report(number: int, name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {number:2d} ({name}): {detail}")
    assert ok, f"criterion {number} ({name}): {detail}"


SITE = SiteMeta(latitude=61.0, longitude=25.0, utc_offset_hours=2)

#: Desk-scale fixture for the ranking / parity / UQ criteria: observation
#: noise at multi-sensor-average level, an envelope thermal lag whose time
#: constant sits inside the models' 7-hour window, fast-moving weather,
#: and orientation-dependent solar gain the gray-box cannot represent.
RANKING_SIM = dict(envelope_capacitance_factor=6.0, solar_gain_directionality=1.0,
                   solar_gain=8e-4, obs_std=0.015, process_std=0.04,
                   weather_rho=0.93, weather_std=4.5)
RANKING_HOURS = 2000
RANKING_INSTANTS = 10
UQ_INSTANTS = 80
RANKING_SEEDS = tuple(range(300, 310))
DET_EPOCHS = 240
BNN_EPOCHS = 340
DESK_LR = 2e-3  # reduced-epoch desk profile trains hotter than the 1e-4 production rate

#: The uncertainty diagnostic pools a heterogeneous portfolio: buildings
#: span a 3x range of thermal responsiveness (and matching noise levels),
#: so hourly changes, predictive spread, and errors all scale together
#: across buildings, as they do across a real building stock.
UQ_BUILDINGS = 6
UQ_EPOCHS = 340


def uq_building_config(i: int) -> SimConfig:
    supply = 0.02 * (1.0 + 0.4 * i)
    return SimConfig(seed=600 + i,
                     supply_rate=supply, outdoor_rate=2.0 * supply,
                     solar_gain=(5.0 + 1.5 * i) * 1e-4,
                     envelope_capacitance_factor=6.0,
                     solar_gain_directionality=1.0,
                     obs_std=0.008 + 0.003 * i,
                     process_std=0.02 + 0.01 * i,
                     weather_rho=0.93, weather_std=4.5)


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def recovery_fits():
    """20 gray-box fits on well-specified 4000-row simulations."""
    t0 = time.time()
    out = []
    for seed in range(100, 120):
        cfg = SimConfig(seed=seed)
        ds = simulate_building(cfg, SITE, 4000)
        post = fit_variational(ds, GrayboxPriors(), max_iters=150, tol=1e-7)
        out.append((cfg, post))
    return out, time.time() - t0


@dataclass
class RankingStudy:
    drift_means: list[dict]
    pooled_pred: dict
    pooled_truth: dict
    elapsed: float


@pytest.fixture(scope="session")
def ranking_study() -> RankingStudy:
    """10 mismatched buildings, all three models trained and rolled out."""
    t0 = time.time()
    drift_means = []
    pooled_pred = {k: [] for k in ("graybox", "lstm-mlp", "lstm-bnn")}
    pooled_truth = {k: [] for k in ("graybox", "lstm-mlp", "lstm-bnn")}
    for seed in RANKING_SEEDS:
        ds = simulate_building(SimConfig(seed=seed, **RANKING_SIM), SITE, RANKING_HOURS)
        train_ds, instants = _split_for_protocol(ds, RANKING_INSTANTS, 48, None)
        gb = fit_variational(train_ds, GrayboxPriors(), max_iters=100, tol=1e-7)
        samples = build_supervised(train_ds)
        tr, va = chronological_split(samples, 0.9)
        det = train(KIND_DETERMINISTIC, tr, va,
                    TrainConfig(epochs=DET_EPOCHS, learning_rate=DESK_LR,
                                hidden_dim=64, seed=seed))
        bnn = train(KIND_STOCHASTIC, tr, va,
                    TrainConfig(epochs=BNN_EPOCHS, learning_rate=DESK_LR,
                                hidden_dim=64, seed=seed))
        means = {}
        for name, model, n_samples in (("graybox", gb, 1), ("lstm-mlp", det, 1),
                                       ("lstm-bnn", bnn, 10)):
            rng = np.random.default_rng([seed, n_samples])
            pm = prediction_matrix(model, ds, instants, 48, n_samples=n_samples,
                                   rng=rng)
            pooled_pred[name].append(pm.predictions)
            pooled_truth[name].append(pm.truth)
            means[name] = float(drift_curve(pm.truth, pm.predictions).mean())
        drift_means.append(means)
    return RankingStudy(
        drift_means=drift_means,
        pooled_pred={k: np.vstack(v) for k, v in pooled_pred.items()},
        pooled_truth={k: np.vstack(v) for k, v in pooled_truth.items()},
        elapsed=time.time() - t0)


@pytest.fixture(scope="session")
def uq_study():
    """Stochastic models on the heterogeneous portfolio; pooled 1-hour
    predictive std and predictive-mean absolute error."""
    uq_std, uq_err = [], []
    for i in range(UQ_BUILDINGS):
        cfg = uq_building_config(i)
        ds = simulate_building(cfg, SITE, RANKING_HOURS)
        train_ds, instants = _split_for_protocol(ds, RANKING_INSTANTS, 48, None)
        samples = build_supervised(train_ds)
        tr, va = chronological_split(samples, 0.9)
        bnn = train(KIND_STOCHASTIC, tr, va,
                    TrainConfig(epochs=UQ_EPOCHS, learning_rate=DESK_LR,
                                hidden_dim=64, seed=cfg.seed))
        points = select_test_instants(ds, UQ_INSTANTS, horizon=1, start=instants[0])
        rng = np.random.default_rng([cfg.seed, 99])
        s_, e_ = one_step_uncertainty(bnn, ds, points, n_samples=100, rng=rng)
        uq_std.append(s_)
        uq_err.append(e_)
    return np.concatenate(uq_std), np.concatenate(uq_err)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_filter_smoother_oracle_equivalence():
    """Filtered and smoothed moments match brute-force joint-Gaussian
    conditioning on 200 random instances of length <= 10."""
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        params = random_params(rng)
        y = rng.normal(20, 2, n)
        if n >= 4 and rng.random() < 0.3:
            y[int(rng.integers(0, n))] = np.nan
        inputs = random_inputs(rng, n)
        fr = kalman_filter(y, inputs, params)
        sm = rts_smoother(fr, params)
        fm, fv, om, ov, _ = joint_gaussian_oracle(y, inputs, params)
        worst = max(worst,
                    np.abs(fr.means - fm).max(), np.abs(fr.variances - fv).max(),
                    np.abs(sm.means - om).max(), np.abs(sm.variances - ov).max())
    elapsed = time.time() - t0
    report(1, "oracle equivalence", worst < 1e-8 and elapsed < 10.0,
           f"max deviation {worst:.2e} over 200 instances in {elapsed:.1f}s")


def test_criterion_02_elbo_monotonicity(recovery_fits):
    fits, elapsed = recovery_fits
    worst = math.inf
    for _, post in fits:
        trace = post.elbo_trace
        rel = np.diff(trace) / np.maximum(1.0, np.abs(trace[:-1]))
        worst = min(worst, rel.min())
    report(2, "ELBO monotonicity", worst >= -1e-6 and elapsed < 120.0,
           f"min relative step {worst:.2e} over 20 fits of 4000 rows in {elapsed:.0f}s")


def test_criterion_03_parameter_recovery(recovery_fits):
    fits, elapsed = recovery_fits
    hits = 0
    worst = 0.0
    for cfg, post in fits:
        m = post.coeff_means
        rels = [abs(m[0] - cfg.supply_rate) / cfg.supply_rate,
                abs(m[1] - cfg.outdoor_rate) / cfg.outdoor_rate,
                abs(m[2] - cfg.solar_gain) / cfg.solar_gain]
        worst = max(worst, max(rels))
        hits += max(rels) < 0.15
    report(3, "parameter recovery", hits >= 18 and elapsed < 120.0,
           f"{hits}/20 seeds within 15% (worst {worst:.1%}) in {elapsed:.0f}s")


def test_criterion_04_gradient_correctness():
    """Every primitive plus both composed training losses pass central
    finite differences at h=1e-5, rel err < 1e-4, tiny dims."""
    t0 = time.time()
    rng = np.random.default_rng(7)

    # primitives
    unary = [ag.sigmoid, ag.tanh, ag.relu, ag.softplus, ag.exp]
    for op in unary:
        leaf = Tensor(rng.standard_normal((3, 4)) + 0.05, requires_grad=True)
        check_gradients(lambda: ag.sum_all(ag.tanh(op(leaf))), {op.__name__: leaf})
    for op in (ag.log, ag.sqrt):
        leaf = Tensor(np.abs(rng.standard_normal((3, 4))) + 0.5, requires_grad=True)
        check_gradients(lambda: ag.sum_all(ag.tanh(op(leaf))), {op.__name__: leaf})
    a = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
    c = Tensor(rng.standard_normal(5), requires_grad=True)
    check_gradients(
        lambda: ag.abs_sum(ag.concat(
            [ag.reshape(ag.matmul(a, b) + c, (-1,)),
             ag.reshape(ag.transpose(a)[0:2, :] * 0.5, (-1,))])),
        {"a": a, "b": b, "c": c})

    # composed losses at hidden_dim=4, window length 3
    for kind in (KIND_DETERMINISTIC, KIND_STOCHASTIC):
        params = init_parameters(kind, TrainConfig(hidden_dim=4, seed=0), rng)
        if kind == KIND_STOCHASTIC:
            params["rho_w"][:] = softplus_inverse(0.3)
            params["rho_b"][:] = softplus_inverse(0.2)
            params["mu_w"][:] = 0.3 * rng.standard_normal(params["mu_w"].shape)
            params["mu_b"][:] = 0.3 * rng.standard_normal(params["mu_b"].shape)
        tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
        x = rng.standard_normal((5, 3, 6))
        y = rng.standard_normal(5)
        noise = rng.standard_normal((5, 2)) if kind == KIND_STOCHASTIC else None
        check_gradients(
            lambda: training_loss(kind, tensors, x, y, 1e-3, 1e-3, noise)[0], tensors)
    elapsed = time.time() - t0
    report(4, "gradient correctness", elapsed < 30.0,
           f"all primitives and both composed losses pass at rel 1e-4 in {elapsed:.1f}s")


def test_criterion_05_closed_form_kl_vs_monte_carlo():
    t0 = time.time()
    rng = np.random.default_rng(11)
    n_samples = 1_000_000
    ok = True
    worst_ratio = 0.0
    for _ in range(20):
        mu = rng.uniform(-0.8, 0.8, 20)
        sigma = rng.uniform(0.05, 0.8, 20)
        beta2 = float(rng.uniform(0.02, 1.5))
        vlayer = VariationalLayer(mu_w=mu.reshape(4, 5), mu_b=np.zeros(0),
                                  rho_w=np.log(np.expm1(sigma)).reshape(4, 5),
                                  rho_b=np.zeros(0), prior_variance=beta2)
        eps = rng.standard_normal((n_samples, 20))
        z = mu + sigma * eps
        # ln q(z) - ln p(z); (z - mu)/sigma is exactly eps by construction
        const = -0.5 * float(np.sum(np.log(sigma ** 2) - math.log(beta2)))
        diffs = const - 0.5 * np.einsum("ij,ij->i", eps, eps) \
            + 0.5 * np.einsum("ij,ij->i", z, z) / beta2
        se = diffs.std(ddof=1) / math.sqrt(n_samples)
        gap = abs(kl_gaussian(vlayer) - diffs.mean())
        worst_ratio = max(worst_ratio, gap / se)
        ok &= gap < 3 * se
    beta2 = 1e-3
    rho = softplus_inverse(math.sqrt(beta2))
    identical = VariationalLayer(mu_w=np.zeros((3, 4)), mu_b=np.zeros(3),
                                 rho_w=np.full((3, 4), rho), rho_b=np.full(3, rho),
                                 prior_variance=beta2)
    exact_zero = abs(kl_gaussian(identical)) < 1e-12
    elapsed = time.time() - t0
    report(5, "closed-form KL", ok and exact_zero and elapsed < 30.0,
           f"20 cases within 3 SE (worst {worst_ratio:.2f} SE), q=p gives 0, "
           f"in {elapsed:.1f}s")


def test_criterion_06_directional_model_ranking(ranking_study):
    study = ranking_study
    wins_mlp = sum(m["lstm-mlp"] < m["graybox"] for m in study.drift_means)
    wins_bnn = sum(m["lstm-bnn"] < m["graybox"] for m in study.drift_means)
    ok = wins_mlp >= 8 and wins_bnn >= 8 and study.elapsed < 1800.0
    report(6, "directional model ranking", ok,
           f"lstm-mlp wins {wins_mlp}/10, lstm-bnn wins {wins_bnn}/10 "
           f"(48h drift mean, envelope mismatch on) in {study.elapsed:.0f}s")


def test_criterion_07_dl_variant_parity(ranking_study):
    study = ranking_study
    profiles = {"unweighted": WeightProfile("unweighted"),
                "sigmoid": WeightProfile("sigmoid"),
                "linear": WeightProfile("linear")}
    gaps = {}
    for name, profile in profiles.items():
        scores = {}
        for kind in ("lstm-mlp", "lstm-bnn"):
            drift = drift_curve(study.pooled_truth[kind], study.pooled_pred[kind])
            scores[kind] = weighted_score(drift, profile)
        gaps[name] = abs(scores["lstm-bnn"] - scores["lstm-mlp"]) / scores["lstm-mlp"]
    ok = all(g <= 0.25 for g in gaps.values())
    detail = ", ".join(f"{k} {v:.1%}" for k, v in gaps.items())
    report(7, "DL-variant parity", ok, f"score gaps: {detail} (limit 25%)")


def test_criterion_08_uncertainty_tracks_error(uq_study):
    std, err = uq_study
    rho, p = spearmanr(std, err)
    ok = rho > 0 and p < 0.05
    report(8, "UQ sanity", ok,
           f"pooled n={len(std)} 1-hour spearman={rho:.3f} p={p:.2e} "
           f"(N_S=100, {UQ_BUILDINGS}-building heterogeneous portfolio)")


def test_criterion_09_degenerate_bnn_equivalence(site):
    from conftest import UTC_START, make_records
    from heatcast.data import BuildingDataset

    recs = make_records(UTC_START, 20.0 + 0.3 * np.sin(np.arange(60) / 3.0),
                        t_sup=50.0, t_out=2.0, ghi=0.0)
    samples = build_supervised(BuildingDataset(site, recs))
    tr, va = chronological_split(samples, 0.8)
    epochs = 30
    det_cfg = TrainConfig(epochs=epochs, learning_rate=1e-3, hidden_dim=4, seed=2)
    det_init = init_parameters(KIND_DETERMINISTIC, det_cfg, np.random.default_rng(2))
    det = train(KIND_DETERMINISTIC, tr, va, det_cfg, init_arrays=det_init)

    rho0 = softplus_inverse(1e-12)
    bnn_init = {k: v for k, v in det_init.items() if k not in ("w1", "b1")}
    bnn_init["mu_w"] = det_init["w1"]
    bnn_init["mu_b"] = det_init["b1"]
    bnn_init["rho_w"] = np.full_like(det_init["w1"], rho0)
    bnn_init["rho_b"] = np.full_like(det_init["b1"], rho0)
    bnn = train(KIND_STOCHASTIC, tr, va,
                TrainConfig(epochs=epochs, learning_rate=1e-3, hidden_dim=4, seed=2,
                            kl_weight=0.0, freeze_sigma=True, init_sigma=1e-12),
                init_arrays=bnn_init)
    gap = np.abs(bnn.train_trace - det.train_trace).max()
    report(9, "degenerate-BNN equivalence", gap < 1e-6,
           f"max per-epoch loss gap {gap:.2e} over {epochs} epochs "
           f"(sigma=1e-12, kl_weight=0, shared init)")


def test_criterion_10_metric_identities():
    rng = np.random.default_rng(5)
    truth = rng.normal(21, 1, (40, 48))
    pred = truth + rng.normal(0, 0.4, (40, 48))
    drift = drift_curve(truth, pred)
    gap_mean = abs(weighted_score(drift, WeightProfile("unweighted")) - drift.mean())
    rows = horizon_rmse(truth, pred, 48)
    gap_quad = abs(math.sqrt(np.mean(rows ** 2)) - math.sqrt(np.mean(drift ** 2)))
    perfect = (np.all(drift_curve(truth, truth) == 0.0)
               and np.all(horizon_rmse(truth, truth, 48) == 0.0)
               and weighted_score(drift_curve(truth, truth),
                                  WeightProfile("sigmoid")) == 0.0)
    ok = gap_mean < 1e-12 and gap_quad < 1e-10 and perfect
    report(10, "metric identities", ok,
           f"unweighted-vs-mean gap {gap_mean:.1e}, quadrature identity gap "
           f"{gap_quad:.1e}, perfect predictions score 0")


def test_criterion_11_prior_sweep_direction(site):
    t0 = time.time()
    ds = simulate_building(SimConfig(seed=42, **RANKING_SIM), SITE, 900)
    config = TrainConfig(epochs=400, learning_rate=DESK_LR, hidden_dim=16, seed=0)
    cases = prior_sweep([1e-3, 1e-4], seeds=[0, 1], dataset=ds, config=config,
                        test_count=6, horizon=48, k_values=[1, 6, 48],
                        n_samples=10)
    kl = {(c.prior_variance, c.seed): c.final_kl for c in cases}
    ok = all(kl[(1e-4, s)] > kl[(1e-3, s)] for s in (0, 1))
    elapsed = time.time() - t0
    detail = ", ".join(f"seed {s}: KL(1e-4)={kl[(1e-4, s)]:.0f} > "
                       f"KL(1e-3)={kl[(1e-3, s)]:.0f}" for s in (0, 1))
    report(11, "prior-sweep direction", ok, f"{detail} in {elapsed:.0f}s")


def test_criterion_12_cli_reproducibility(tmp_path, monkeypatch):
    monkeypatch.delenv("HEATCAST_OUT_DIR", raising=False)
    t0 = time.time()

    def run_pipeline(root):
        sim = root / "sim"
        assert main(["simulate", "--out", str(sim), "--seed", "3",
                     "--hours", "500"]) == EXIT_OK
        config = {
            "seed": 3,
            "buildings": [{"dataset": str(sim / "building_00" / "dataset.csv"),
                           "site": str(sim / "building_00" / "site.json")}],
            "train": {"epochs": 3, "hidden_dim": 8, "learning_rate": 1e-3},
            "graybox": {"max_iters": 8, "tol": 1e-7},
            "evaluation": {"count": 3, "horizon": 6, "k_values": [1, 6],
                           "n_samples": 2, "uq_samples": 5, "uq_bins": 2,
                           "test_start": "2021-09-18T00:00:00Z"},
        }
        cfg_path = root / "config.json"
        cfg_path.write_text(json.dumps(config))
        tdir = root / "train"
        for model in ("graybox", "lstm-mlp", "lstm-bnn"):
            assert main(["train", "--config", str(cfg_path), "--model", model,
                         "--out", str(tdir), "--seed", "3"]) == EXIT_OK
        eval_cfg = dict(config)
        eval_cfg["buildings"] = [dict(config["buildings"][0], checkpoints={
            "graybox": str(tdir / "graybox_checkpoint.json"),
            "lstm-mlp": str(tdir / "lstm-mlp_checkpoint.json"),
            "lstm-bnn": str(tdir / "lstm-bnn_checkpoint.json")})]
        eval_path = root / "eval_config.json"
        eval_path.write_text(json.dumps(eval_cfg))
        edir = root / "eval"
        assert main(["evaluate", "--config", str(eval_path), "--out", str(edir),
                     "--seed", "3"]) == EXIT_OK
        pdir = root / "pred"
        assert main(["predict",
                     "--checkpoint", str(tdir / "lstm-bnn_checkpoint.json"),
                     "--dataset", str(sim / "building_00" / "dataset.csv"),
                     "--site", str(sim / "building_00" / "site.json"),
                     "--instant", "2021-09-19T00:00:00Z", "--horizon", "4",
                     "--samples", "3", "--out", str(pdir), "--seed", "3"]) == EXIT_OK
        out = {}
        for sub in (sim, tdir, edir, pdir):
            for p in sorted(sub.rglob("*")):
                if p.is_file() and p.name != "run_manifest.json":
                    out[str(p.relative_to(root))] = p.read_bytes()
        return out

    first = run_pipeline(tmp_path / "a")
    second = run_pipeline(tmp_path / "b")
    identical = first == second
    n_files = len(first)
    elapsed = time.time() - t0
    report(12, "CLI reproducibility",
           identical and first.keys() == second.keys() and n_files > 10,
           f"{n_files} numeric output files byte-identical across re-runs "
           f"in {elapsed:.0f}s")
