"""Command-line surface: reproducible simulate / train / predict /
evaluate / prior-sweep runs over flat-file artifacts.

Every run resolves its settings (flags > config file > defaults), writes
its outputs plus a ``run_manifest.json`` capturing the resolved config,
library versions, and sha256 digests of every input file it consumed.
Given a seed, re-running a subcommand reproduces its numeric outputs
byte for byte. The output directory can be forced with the
``HEATCAST_OUT_DIR`` environment variable.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import evaluate as ev
from . import graybox, models
from .data import (BuildingDataset, dump_site, load_dataset, load_site,
                   parse_timestamp, write_records_csv)
from .errors import ConfigError, DataError, HeatcastError, NumericalError
from .features import build_supervised, chronological_split
from .models import KIND_DETERMINISTIC, KIND_STOCHASTIC, TrainConfig
from .simulate import SimConfig, resolved_profile, simulate_building

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

GRAYBOX_KIND = "graybox"
ALL_KINDS = (GRAYBOX_KIND, KIND_DETERMINISTIC, KIND_STOCHASTIC)


def _fmt(x) -> str:
    return repr(float(x))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path}: top level must be an object")
    return raw


def _resolve_out_dir(args, config: dict, command: str) -> Path:
    env = os.environ.get("HEATCAST_OUT_DIR")
    if env:
        out = Path(env)
    elif getattr(args, "out", None):
        out = Path(args.out)
    elif config.get("output_dir"):
        out = Path(config["output_dir"])
    else:
        out = Path("runs") / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_seed(args, config: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if "seed" in config:
        return int(config["seed"])
    return int(np.random.SeedSequence().entropy % (2 ** 32))


def _write_manifest(out_dir: Path, command: str, resolved: dict,
                    inputs: list[str | Path], outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "resolved_config": resolved,
        "versions": {
            "heatcast": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "input_digests": {str(p): _sha256(Path(p)) for p in sorted(set(map(str, inputs)))},
        "outputs": sorted(p.name for p in outputs),
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _train_config(config: dict, seed: int) -> TrainConfig:
    section = dict(config.get("train", {}))
    if "lr_milestones" in section and section["lr_milestones"] is not None:
        section["lr_milestones"] = tuple(section["lr_milestones"])
    section.setdefault("seed", seed)
    try:
        return TrainConfig(**section)
    except TypeError as exc:
        raise ConfigError(f"bad train section: {exc}") from None


def _eval_section(config: dict) -> dict:
    section = {
        "count": 24, "horizon": ev.DEFAULT_HORIZON, "k_values": [1, 6, 48],
        "n_samples": 10, "uq_samples": 100, "uq_bins": 10,
        "split_ratio": 0.9, "test_start": None,
        "sigmoid_midpoint": 12.0, "sigmoid_steepness": 3.0,
    }
    section.update(config.get("evaluation", {}))
    if max(section["k_values"]) > section["horizon"]:
        raise ConfigError("evaluation horizon must be >= max(k_values)")
    return section


def _buildings(config: dict) -> list[dict]:
    buildings = config.get("buildings", [])
    if not buildings:
        raise ConfigError("config must list at least one building")
    for b in buildings:
        for key in ("dataset", "site"):
            if key not in b:
                raise ConfigError(f"building entry missing {key!r}")
            if not Path(b[key]).exists():
                raise ConfigError(f"referenced path {b[key]} does not exist")
        for path in b.get("checkpoints", {}).values():
            if not Path(path).exists():
                raise ConfigError(f"referenced checkpoint {path} does not exist")
    return buildings


def _train_cut(dataset: BuildingDataset, eval_section: dict) -> BuildingDataset:
    """Rows strictly before test_start, so evaluation stays out of sample."""
    test_start = eval_section.get("test_start")
    if test_start is None:
        return dataset
    ts = parse_timestamp(test_start)
    rows = int(np.searchsorted(dataset.hours, ts.timestamp() // 3600))
    if rows < 1:
        raise DataError("no training rows before test_start")
    return dataset.slice_rows(0, rows)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    seed = _resolve_seed(args, config)
    out_dir = _resolve_out_dir(args, config, "simulate")
    sim_section = dict(config.get("sim", {}))
    hours = int(args.hours or sim_section.pop("hours", 4500))
    count = int(args.count or sim_section.pop("count", 1))
    site_spec = sim_section.pop("site", {"latitude": 61.0, "longitude": 25.0,
                                         "utc_offset_hours": 2, "holidays": []})
    site = load_site(site_spec) if isinstance(site_spec, str) else _site_from_dict(site_spec)
    sim_section.pop("seed", None)
    outputs = []
    for i in range(count):
        try:
            sim = SimConfig(seed=seed + i, **sim_section)
        except TypeError as exc:
            raise ConfigError(f"bad sim section: {exc}") from None
        dataset = simulate_building(sim, site, hours)
        bdir = out_dir / f"building_{i:02d}"
        bdir.mkdir(parents=True, exist_ok=True)
        write_records_csv(dataset.records, bdir / "dataset.csv")
        dump_site(site, bdir / "site.json")
        truth = sim.to_dict()
        truth["internal_gain_profile"] = [float(v) for v in resolved_profile(sim)]
        (bdir / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
        outputs += [bdir / "dataset.csv", bdir / "site.json", bdir / "truth.json"]
    resolved = {"command": "simulate", "seed": seed, "hours": hours, "count": count,
                "sim": sim_section, "site": _site_dict(site)}
    inputs = [args.config] if args.config else []
    _write_manifest(out_dir, "simulate", resolved, inputs, outputs)
    return EXIT_OK


def _site_from_dict(d: dict):
    from datetime import date

    from .data import SiteMeta
    return SiteMeta(latitude=float(d["latitude"]), longitude=float(d["longitude"]),
                    utc_offset_hours=int(d.get("utc_offset_hours", 0)),
                    holidays=frozenset(date.fromisoformat(x)
                                       for x in d.get("holidays", [])))


def _site_dict(site) -> dict:
    return {"latitude": site.latitude, "longitude": site.longitude,
            "utc_offset_hours": site.utc_offset_hours,
            "holidays": sorted(d.isoformat() for d in site.holidays)}


def cmd_train(args) -> int:
    config = _load_config(args.config)
    seed = _resolve_seed(args, config)
    out_dir = _resolve_out_dir(args, config, "train")
    eval_section = _eval_section(config)
    if args.dataset and args.site:
        dataset_path, site_path = args.dataset, args.site
    else:
        building = _buildings(config)[args.building]
        dataset_path, site_path = building["dataset"], building["site"]
    dataset = load_dataset(dataset_path, site_path)
    train_ds = _train_cut(dataset, eval_section)
    inputs = [p for p in (args.config, dataset_path, site_path) if p]
    outputs = []

    if args.model == GRAYBOX_KIND:
        gb_section = dict(config.get("graybox", {}))
        max_iters = int(gb_section.pop("max_iters", 200))
        tol = float(gb_section.pop("tol", 1e-8))
        try:
            priors = graybox.GrayboxPriors(**gb_section)
        except TypeError as exc:
            raise ConfigError(f"bad graybox section: {exc}") from None
        posterior = graybox.fit_variational(train_ds, priors, max_iters=max_iters, tol=tol)
        ckpt = out_dir / "graybox_checkpoint.json"
        graybox.save_checkpoint(posterior, ckpt)
        trace_path = out_dir / "graybox_loss.csv"
        _write_csv(trace_path, ["iteration", "elbo"],
                   [[i + 1, _fmt(v)] for i, v in enumerate(posterior.elbo_trace)])
        outputs += [ckpt, trace_path]
        resolved_model: dict = {"priors": asdict(priors), "max_iters": max_iters, "tol": tol}
    else:
        tc = _train_config(config, seed)
        samples = build_supervised(train_ds)
        tr, va = chronological_split(samples, eval_section["split_ratio"])
        model = models.train(args.model, tr, va, tc)
        ckpt = out_dir / f"{args.model}_checkpoint.json"
        models.save_checkpoint(model, ckpt)
        trace_path = out_dir / f"{args.model}_loss.csv"
        _write_csv(trace_path, ["epoch", "train_loss", "val_loss"],
                   [[i + 1, _fmt(t), _fmt(v)] for i, (t, v) in
                    enumerate(zip(model.train_trace, model.val_trace))])
        outputs += [ckpt, trace_path]
        resolved_model = {"train": {**asdict(tc), "lr_milestones":
                                    list(tc.lr_milestones) if tc.lr_milestones else None}}
    resolved = {"command": "train", "model": args.model, "seed": seed,
                "dataset": str(dataset_path), "site": str(site_path),
                "evaluation": _jsonable(eval_section), **_jsonable(resolved_model)}
    _write_manifest(out_dir, "train", resolved, inputs, outputs)
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _load_any_checkpoint(path: str):
    raw = json.loads(Path(path).read_text())
    kind = raw.get("kind")
    if kind == GRAYBOX_KIND:
        return graybox.load_checkpoint(path)
    if kind in (KIND_DETERMINISTIC, KIND_STOCHASTIC):
        return models.load_checkpoint(path)
    raise ConfigError(f"{path}: unknown checkpoint kind {kind!r}")


def cmd_predict(args) -> int:
    config = _load_config(args.config)
    seed = _resolve_seed(args, config)
    out_dir = _resolve_out_dir(args, config, "predict")
    for path in (args.checkpoint, args.dataset, args.site):
        if not Path(path).exists():
            raise ConfigError(f"referenced path {path} does not exist")
    model = _load_any_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset, args.site)
    instant = parse_timestamp(args.instant)
    rng = np.random.default_rng(seed)
    fc = ev.forecast_at(model, dataset, instant, args.horizon,
                        n_samples=args.samples, rng=rng)
    path = out_dir / "forecast.csv"
    _write_csv(path, ["step", "mean", "step_std", "cum_std"],
               [[j + 1, _fmt(fc.mean[j]), _fmt(fc.step_std[j]), _fmt(fc.cum_std[j])]
                for j in range(fc.horizon)])
    resolved = {"command": "predict", "seed": seed, "checkpoint": args.checkpoint,
                "dataset": args.dataset, "site": args.site, "instant": args.instant,
                "horizon": args.horizon, "samples": args.samples}
    _write_manifest(out_dir, "predict", resolved,
                    [p for p in (args.config, args.checkpoint, args.dataset, args.site) if p],
                    [path])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    seed = _resolve_seed(args, config)
    out_dir = _resolve_out_dir(args, config, "evaluate")
    section = _eval_section(config)
    buildings = _buildings(config)
    horizon = int(section["horizon"])
    k_values = [int(k) for k in section["k_values"]]
    test_start = (parse_timestamp(section["test_start"])
                  if section.get("test_start") else None)
    inputs = [args.config] if args.config else []

    pooled: dict[str, list[np.ndarray]] = {}
    pooled_truth: dict[str, list[np.ndarray]] = {}
    uq_std: list[np.ndarray] = []
    uq_err: list[np.ndarray] = []
    for b_idx, b in enumerate(buildings):
        dataset = load_dataset(b["dataset"], b["site"])
        inputs += [b["dataset"], b["site"]]
        instants = ev.select_test_instants(dataset, int(section["count"]), horizon,
                                           start=test_start)
        for kind, ckpt_path in sorted(b.get("checkpoints", {}).items()):
            inputs.append(ckpt_path)
            model = _load_any_checkpoint(ckpt_path)
            rng = np.random.default_rng([seed, b_idx, ALL_KINDS.index(kind)])
            n_samples = int(section["n_samples"]) if kind == KIND_STOCHASTIC else 1
            pm = ev.prediction_matrix(model, dataset, instants, horizon,
                                      n_samples=n_samples, rng=rng)
            pooled.setdefault(kind, []).append(pm.predictions)
            pooled_truth.setdefault(kind, []).append(pm.truth)
            if kind == KIND_STOCHASTIC:
                uq_rng = np.random.default_rng([seed, b_idx, 99])
                stds, errs = ev.one_step_uncertainty(
                    model, dataset, instants, int(section["uq_samples"]), uq_rng)
                uq_std.append(stds)
                uq_err.append(errs)

    outputs = []
    kinds = sorted(pooled)
    matrices = {k: ev.PredictionMatrix(predictions=np.vstack(pooled[k]),
                                       truth=np.vstack(pooled_truth[k]))
                for k in kinds}
    for k in k_values:
        rows = []
        for kind in kinds:
            pm = matrices[kind]
            summary = ev.DistributionSummary.of(ev.horizon_rmse(pm.truth, pm.predictions, k))
            rows.append([kind] + [_fmt(getattr(summary, f)) for f in
                                  ("median", "q25", "q75", "q025", "q975")])
        path = out_dir / f"rmse_K{k}.csv"
        _write_csv(path, ["model", "median", "q25", "q75", "q025", "q975"], rows)
        outputs.append(path)

    drifts = {kind: ev.drift_curve(matrices[kind].truth, matrices[kind].predictions)
              for kind in kinds}
    drift_path = out_dir / "drift.csv"
    _write_csv(drift_path, ["step"] + kinds,
               [[j + 1] + [_fmt(drifts[kind][j]) for kind in kinds]
                for j in range(horizon)])
    outputs.append(drift_path)

    profiles = {
        "unweighted": ev.WeightProfile("unweighted"),
        "sigmoid": ev.WeightProfile("sigmoid", midpoint=float(section["sigmoid_midpoint"]),
                                    steepness=float(section["sigmoid_steepness"])),
        "linear": ev.WeightProfile("linear"),
    }
    scores_path = out_dir / "scores.csv"
    _write_csv(scores_path, ["model", "unweighted", "sigmoid", "linear"],
               [[kind] + [_fmt(ev.weighted_score(drifts[kind], profiles[p]))
                          for p in ("unweighted", "sigmoid", "linear")]
                for kind in kinds])
    outputs.append(scores_path)
    meta_path = out_dir / "weight_profiles.json"
    meta_path.write_text(json.dumps({n: p.describe() for n, p in profiles.items()},
                                    indent=2, sort_keys=True) + "\n")
    outputs.append(meta_path)

    if uq_std:
        bins = ev.uncertainty_error_bins(np.concatenate(uq_std), np.concatenate(uq_err),
                                         bins=int(section["uq_bins"]))
        uq_path = out_dir / "uq_bins.csv"
        _write_csv(uq_path,
                   ["bin", "count", "std_mean", "abs_err_mean", "spearman", "p_value"],
                   [[i + 1, int(bins.count[i]), _fmt(bins.std_mean[i]),
                     _fmt(bins.error_mean[i]), _fmt(bins.spearman), _fmt(bins.p_value)]
                    for i in range(len(bins.count))])
        outputs.append(uq_path)

    resolved = {"command": "evaluate", "seed": seed, "evaluation": _jsonable(section),
                "buildings": buildings}
    _write_manifest(out_dir, "evaluate", resolved, inputs, outputs)
    return EXIT_OK


def cmd_prior_sweep(args) -> int:
    config = _load_config(args.config)
    seed = _resolve_seed(args, config)
    out_dir = _resolve_out_dir(args, config, "prior-sweep")
    section = _eval_section(config)
    sweep = dict(config.get("sweep", {}))
    prior_variances = [float(v) for v in sweep.get("prior_variances", [1e-2, 1e-3, 1e-4])]
    seeds = [int(s) for s in sweep.get("seeds", [seed])]
    buildings = _buildings(config)
    tc = _train_config(config, seed)
    test_start = (parse_timestamp(section["test_start"])
                  if section.get("test_start") else None)
    inputs = [args.config] if args.config else []
    rows = []
    for b_idx, b in enumerate(buildings):
        dataset = load_dataset(b["dataset"], b["site"])
        inputs += [b["dataset"], b["site"]]
        cases = ev.prior_sweep(prior_variances, seeds, dataset, tc,
                               test_count=int(section["count"]),
                               horizon=int(section["horizon"]),
                               k_values=[int(k) for k in section["k_values"]],
                               n_samples=int(section["n_samples"]),
                               split_ratio=float(section["split_ratio"]),
                               test_start=test_start)
        for case in cases:
            for k, summary in sorted(case.rmse.items()):
                rows.append([b_idx, _fmt(case.prior_variance), case.seed, k,
                             _fmt(summary.median), _fmt(summary.q25), _fmt(summary.q75),
                             _fmt(summary.q025), _fmt(summary.q975),
                             _fmt(case.final_kl)])
    path = out_dir / "prior_sweep.csv"
    _write_csv(path, ["building", "prior_variance", "seed", "K", "median",
                      "q25", "q75", "q025", "q975", "final_kl"], rows)
    resolved = {"command": "prior-sweep", "seed": seed, "prior_variances": prior_variances,
                "seeds": seeds, "evaluation": _jsonable(section), "buildings": buildings}
    _write_manifest(out_dir, "prior-sweep", resolved, inputs, [path])
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatcast",
        description="Indoor-temperature forecasting experiments for heating MPC")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="base RNG seed")

    p = sub.add_parser("simulate", help="generate a synthetic building dataset")
    common(p)
    p.add_argument("--hours", type=int, help="number of hourly records")
    p.add_argument("--count", type=int, help="number of buildings")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train one model on one building")
    common(p)
    p.add_argument("--model", required=True, choices=ALL_KINDS)
    p.add_argument("--dataset", help="dataset CSV (overrides config building)")
    p.add_argument("--site", help="site JSON (overrides config building)")
    p.add_argument("--building", type=int, default=0,
                   help="index into the config's buildings list")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="forecast from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--site", required=True)
    p.add_argument("--instant", required=True, help="forecast origin, ISO 8601 UTC")
    p.add_argument("--horizon", type=int, default=ev.DEFAULT_HORIZON)
    p.add_argument("--samples", type=int, default=10)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run the comparison protocol")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("prior-sweep", help="sweep stochastic-layer prior variances")
    common(p)
    p.set_defaults(func=cmd_prior_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HeatcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
