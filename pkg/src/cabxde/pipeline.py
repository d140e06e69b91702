"""The four-stage forecasting workflow as library functions.

1. ``ingest``   parse, fit the scaler on the training rows, write a manifest
2. ``train``    fit the BiLSTM or the boosted trees on windowed samples
3. ``ensemble`` reciprocal-error weights and the stacking regression
4. ``evaluate`` / ``export_plot`` / ``predict``

Artifacts live in ``config.output_dir``. Every command after ``ingest``
re-reads the CSV sources, checks them against the manifest digests and
reuses the stored scaler, so no statistic is ever refitted downstream.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import bilstm as bl
from . import gbdt as gb
from .config import SPLITS, PipelineConfig
from .dataio import FEATURES, ScalerParams, SeriesDataset, WindowSet, fit_scaler, make_windows, read_csv, train_size
from .ensemble import ReciprocalWeights, StackingModel, fit_stacking, reciprocal_weights, stack_predict, weighted_combine
from .errors import DataError, MissingArtifactError
from .metrics import EvalResult, evaluate as eval_metrics, mape, report_csv
from .persist import digest, file_sha256, load_checkpoint, save_checkpoint
from .plotting import write_svg

log = logging.getLogger(__name__)

MODEL_ORDER = ("bilstm", "gbdt", "reciprocal", "stacking")


@dataclass
class Split:
    name: str
    windows: WindowSet
    dates: list[date]
    actual: np.ndarray  # close price of each target row


@dataclass
class Prepared:
    dataset1: SeriesDataset
    dataset2: SeriesDataset | None
    scaler: ScalerParams
    splits: dict[str, Split]
    bounds: dict[str, tuple[int, int]]


def _paths(cfg: PipelineConfig) -> dict[str, Path]:
    out = cfg.out
    return {
        "manifest": out / "manifest.json",
        "scaler": out / "scaler.json",
        "bilstm": out / "bilstm.json",
        "bilstm_log": out / "bilstm_log.csv",
        "gbdt": out / "gbdt.json",
        "gbdt_log": out / "gbdt_log.csv",
        "ensemble": out / "ensemble.json",
    }


def _read_source(path, date_format) -> SeriesDataset:
    if path is None:
        raise DataError("no dataset1 path configured")
    if not Path(path).exists():
        raise MissingArtifactError(f"input file not found: {path}")
    return read_csv(path, date_format)


def _subset(windows, dates, closes, name, first, stop) -> Split:
    w = windows.select_rows(first, stop)
    return Split(name, w, [dates[r] for r in w.target_rows], closes[w.target_rows])


def build_splits(cfg: PipelineConfig, ds1: SeriesDataset, ds2: SeriesDataset | None, scaler: ScalerParams | None = None):
    """Window the scaled series and assign each window by its target row.

    Train rows are the first ``train_fraction`` of dataset 1, the last
    ``validation_fraction`` of those form the validation split, the rest
    is test. Windows may look back across a split boundary, never ahead.
    """
    ts = cfg.bilstm.time_step
    n = len(ds1)
    n_train = train_size(n, cfg.train_fraction)
    if n_train == 0 or n_train >= n:
        raise DataError(f"split of {n} rows at {cfg.train_fraction} leaves an empty side")
    if scaler is None:
        scaler = fit_scaler(ds1[:n_train], FEATURES)
    n_val = train_size(n_train, cfg.validation_fraction)
    bounds = {"train": (ts, n_train - n_val), "val": (n_train - n_val, n_train), "test": (n_train, n)}
    windows = make_windows(scaler.transform(ds1.matrix(FEATURES)), ts)
    dates, closes = ds1.dates, ds1.column("close")
    splits = {name: _subset(windows, dates, closes, name, *b) for name, b in bounds.items()}
    if ds2 is not None:
        w2 = make_windows(scaler.transform(ds2.matrix(FEATURES)), ts)
        splits["dataset2"] = _subset(w2, ds2.dates, ds2.column("close"), "dataset2", ts, len(ds2))
        bounds["dataset2"] = (ts, len(ds2))
    return Prepared(ds1, ds2, scaler, splits, bounds)


def _manifest(cfg: PipelineConfig, prep: Prepared) -> dict:
    sources = {}
    for key, ds, path in (("dataset1", prep.dataset1, cfg.dataset1), ("dataset2", prep.dataset2, cfg.dataset2)):
        if ds is None:
            continue
        sources[key] = {
            "file": Path(path).name,
            "sha256": file_sha256(path),
            "rows": len(ds),
            "first_date": ds.dates[0].isoformat(),
            "last_date": ds.dates[-1].isoformat(),
        }
    splits = {}
    for name, s in prep.splits.items():
        first, stop = prep.bounds[name]
        splits[name] = {
            "first_row": first,
            "stop_row": stop,
            "n_windows": len(s.windows),
            "first_target_date": s.dates[0].isoformat() if s.dates else None,
            "last_target_date": s.dates[-1].isoformat() if s.dates else None,
        }
    body = {
        "sources": sources,
        "date_format": cfg.date_format,
        "features": list(FEATURES),
        "time_step": cfg.bilstm.time_step,
        "train_fraction": cfg.train_fraction,
        "validation_fraction": cfg.validation_fraction,
        "scaler_fit_rows": [0, prep.bounds["test"][0]],
        "splits": splits,
    }
    body["digest"] = digest(body)
    return body


def ingest(cfg: PipelineConfig) -> dict:
    cfg.validate()
    ds1 = _read_source(cfg.dataset1, cfg.date_format)
    ds2 = _read_source(cfg.dataset2, cfg.date_format) if cfg.dataset2 else None
    prep = build_splits(cfg, ds1, ds2)
    manifest = _manifest(cfg, prep)
    p = _paths(cfg)
    save_checkpoint(p["scaler"], "scaler", prep.scaler.to_dict(), cfg.to_dict())
    save_checkpoint(p["manifest"], "manifest", manifest, cfg.to_dict())
    return manifest


def load_prepared(cfg: PipelineConfig) -> Prepared:
    p = _paths(cfg)
    manifest = load_checkpoint(p["manifest"], "manifest")["payload"]
    scaler = ScalerParams.from_dict(load_checkpoint(p["scaler"], "scaler")["payload"])
    if manifest["time_step"] != cfg.bilstm.time_step:
        raise DataError(f"manifest was built with time_step {manifest['time_step']}, config says {cfg.bilstm.time_step}")
    ds1 = _read_source(cfg.dataset1, cfg.date_format)
    ds2 = _read_source(cfg.dataset2, cfg.date_format) if cfg.dataset2 else None
    for key, path in (("dataset1", cfg.dataset1), ("dataset2", cfg.dataset2)):
        src = manifest["sources"].get(key)
        if path and (src is None or src["sha256"] != file_sha256(path)):
            raise DataError(f"{key} ({path}) changed since ingest; rerun ingest")
    return build_splits(cfg, ds1, ds2, scaler)


def _write_csv(path, header, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def train(cfg: PipelineConfig, which: str):
    """Fit one base model; returns the fitted model object."""
    cfg.validate()
    prep = load_prepared(cfg)
    tr, va = prep.splits["train"], prep.splits["val"]
    if len(tr.windows) == 0:
        raise DataError("training split has no windows; lower time_step or provide more rows")
    p = _paths(cfg)
    if which == "bilstm":
        if len(va.windows) == 0:
            raise DataError("validation split has no windows; early stopping needs at least one")
        net = bl.BiLstmNetwork(len(FEATURES), cfg.bilstm)
        result = bl.train(net, tr.windows.inputs, tr.windows.targets, va.windows.inputs, va.windows.targets)
        payload = net.to_dict()
        payload["best_epoch"] = result.best_epoch
        payload["epochs_run"] = len(result.history)
        save_checkpoint(p["bilstm"], "bilstm", payload, cfg.to_dict())
        _write_csv(
            p["bilstm_log"],
            ["epoch", "train_loss", "val_loss"],
            [(h["epoch"], h["train_loss"], h["val_loss"]) for h in result.history],
        )
        log.info("bilstm: %d epochs, best val loss %.6g at epoch %d", len(result.history), result.best_val_loss, result.best_epoch)
        return net
    if which == "gbdt":
        model = gb.fit(tr.windows.flattened(), tr.actual, cfg.gbdt)
        save_checkpoint(p["gbdt"], "gbdt", model.to_dict(), cfg.to_dict())
        _write_csv(
            p["gbdt_log"],
            ["round", "n_trees", "n_leaves", "train_mse", "objective"],
            [(h["round"], h["n_trees"], h["n_leaves"], h["train_mse"], h["objective"]) for h in model.history],
        )
        log.info("gbdt: %d trees kept of %d rounds", len(model.trees), cfg.gbdt.n_estimators)
        return model
    raise DataError(f"unknown model {which!r}; expected 'bilstm' or 'gbdt'")


def load_bilstm(cfg) -> bl.BiLstmNetwork:
    return bl.BiLstmNetwork.from_dict(load_checkpoint(_paths(cfg)["bilstm"], "bilstm")["payload"])


def load_gbdt(cfg) -> gb.BoostedModel:
    return gb.BoostedModel.from_dict(load_checkpoint(_paths(cfg)["gbdt"], "gbdt")["payload"])


def load_ensemble(cfg) -> tuple[ReciprocalWeights, StackingModel, dict]:
    payload = load_checkpoint(_paths(cfg)["ensemble"], "ensemble")["payload"]
    w = payload["weights"]
    s = payload["stacking"]
    return (
        ReciprocalWeights(w["w_bl"], w["w_xg"], w.get("degenerate", False)),
        StackingModel(s["intercept"], s["coef_bl"], s["coef_xg"]),
        payload,
    )


def base_predictions(prep: Prepared, split: Split, net=None, model=None) -> dict[str, np.ndarray]:
    """Price-unit forecasts of each available base model on ``split``."""
    out = {}
    if len(split.windows) == 0:
        return {k: np.empty(0) for k, m in (("bilstm", net), ("gbdt", model)) if m is not None}
    if net is not None:
        out["bilstm"] = prep.scaler.inverse_scale(net.predict(split.windows.inputs), "close")
    if model is not None:
        out["gbdt"] = model.predict(split.windows.flattened())
    return out


def ensemble(cfg: PipelineConfig) -> dict:
    cfg.validate()
    prep = load_prepared(cfg)
    net, model = load_bilstm(cfg), load_gbdt(cfg)
    va = prep.splits["val"]
    fit_split = prep.splits[cfg.stacking_fit_split]
    if len(va.windows) == 0 or len(fit_split.windows) < 3:
        raise DataError("ensemble needs validation windows and at least 3 stacking windows")
    pv = base_predictions(prep, va, net, model)
    e_bl, e_xg = mape(va.actual, pv["bilstm"]), mape(va.actual, pv["gbdt"])
    weights = reciprocal_weights(e_bl, e_xg)
    pf = base_predictions(prep, fit_split, net, model)
    stack = fit_stacking(pf["bilstm"], pf["gbdt"], fit_split.actual)
    payload = {
        "weights": {"w_bl": weights.w_bl, "w_xg": weights.w_xg, "degenerate": weights.degenerate},
        "errors": {"metric": "mape", "split": "val", "e_bl": e_bl, "e_xg": e_xg, "n": len(va.actual)},
        "stacking": {
            "intercept": stack.intercept,
            "coef_bl": stack.coef_bl,
            "coef_xg": stack.coef_xg,
            "fit_split": cfg.stacking_fit_split,
            "n": len(fit_split.actual),
        },
    }
    save_checkpoint(_paths(cfg)["ensemble"], "ensemble", payload, cfg.to_dict())
    log.info(
        "Ebl=%.6g Exg=%.6g -> w_bl=%.4f w_xg=%.4f; stacking %.6g + %.6g*bl + %.6g*xg",
        e_bl, e_xg, weights.w_bl, weights.w_xg, stack.intercept, stack.coef_bl, stack.coef_xg,
    )
    return payload


def _available_models(cfg):
    p = _paths(cfg)
    net = load_bilstm(cfg) if p["bilstm"].exists() else None
    model = load_gbdt(cfg) if p["gbdt"].exists() else None
    ens = load_ensemble(cfg) if (p["ensemble"].exists() and net is not None and model is not None) else None
    return net, model, ens


def split_predictions(cfg: PipelineConfig, split_name: str, prep: Prepared | None = None):
    if split_name not in SPLITS:
        raise DataError(f"unknown split {split_name!r}; expected one of {SPLITS}")
    prep = prep or load_prepared(cfg)
    if split_name not in prep.splits:
        raise MissingArtifactError(f"split {split_name!r} is not available (no dataset2 configured?)")
    split = prep.splits[split_name]
    if len(split.windows) == 0:
        raise DataError(f"split {split_name!r} has no windows")
    net, model, ens = _available_models(cfg)
    if net is None and model is None:
        raise MissingArtifactError(f"no trained model checkpoints in {cfg.out}")
    preds = base_predictions(prep, split, net, model)
    if ens is not None:
        weights, stack, _ = ens
        preds["reciprocal"] = weighted_combine(preds["bilstm"], preds["gbdt"], weights)
        preds["stacking"] = stack_predict(stack, preds["bilstm"], preds["gbdt"])
    return split, {k: preds[k] for k in MODEL_ORDER if k in preds}


def evaluate(cfg: PipelineConfig, split_name: str = "test") -> list[EvalResult]:
    split, preds = split_predictions(cfg, split_name)
    results = [eval_metrics(name, split.actual, p) for name, p in preds.items()]
    out = cfg.out
    (out / f"report_{split_name}.csv").write_text(report_csv(results), encoding="utf-8")
    _write_csv(
        out / f"predictions_{split_name}.csv",
        ["date", "actual", *preds],
        [
            (d.isoformat(), float(a), *(float(p[k]) for p in preds.values()))
            for k, (d, a) in enumerate(zip(split.dates, split.actual))
        ],
    )
    return results


def read_predictions(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"missing evaluation predictions: {path} (run evaluate first)")
    rows = list(csv.reader(path.read_text(encoding="utf-8").splitlines()))
    return rows[0], rows[1:]


def export_plot(cfg: PipelineConfig, split_name: str = "test", date_from: date | None = None, date_to: date | None = None):
    header, rows = read_predictions(cfg.out / f"predictions_{split_name}.csv")
    keep = [
        r for r in rows
        if (date_from is None or date.fromisoformat(r[0]) >= date_from)
        and (date_to is None or date.fromisoformat(r[0]) <= date_to)
    ]
    if not keep:
        raise DataError("date window selects no rows")
    csv_path = cfg.out / "predictions.csv"
    svg_path = cfg.out / "predictions.svg"
    _write_csv(csv_path, header, keep)
    dates = [date.fromisoformat(r[0]) for r in keep]
    actual = [float(r[1]) for r in keep]
    series = {name: [float(r[k]) for r in keep] for k, name in enumerate(header[2:], start=2)}
    write_svg(svg_path, dates, actual, series, title=f"{split_name}: {dates[0]} to {dates[-1]}")
    return csv_path, svg_path


def predict(cfg: PipelineConfig, source: str = "dataset1") -> dict:
    """Next-day close forecast from the last ``time_step`` rows of a dataset."""
    prep = load_prepared(cfg)
    ds = prep.dataset2 if source == "dataset2" else prep.dataset1
    if ds is None:
        raise MissingArtifactError("dataset2 is not configured")
    ts = cfg.bilstm.time_step
    if len(ds) < ts:
        raise DataError(f"need at least {ts} rows to forecast, have {len(ds)}")
    x = prep.scaler.transform(ds[len(ds) - ts:].matrix(FEATURES))[None]
    window = WindowSet(x, np.zeros(1), np.array([len(ds)]))
    split = Split("forecast", window, [], np.empty(0))
    net, model, ens = _available_models(cfg)
    if net is None and model is None:
        raise MissingArtifactError(f"no trained model checkpoints in {cfg.out}")
    preds = {k: float(v[0]) for k, v in base_predictions(prep, split, net, model).items()}
    if ens is not None:
        weights, stack, _ = ens
        preds["reciprocal"] = float(weighted_combine([preds["bilstm"]], [preds["gbdt"]], weights)[0])
        preds["stacking"] = float(stack_predict(stack, [preds["bilstm"]], [preds["gbdt"]])[0])
        preds["cabxde"] = preds[cfg.fusion]
    return {"date": (ds.dates[-1] + timedelta(days=1)).isoformat(), "last_close": ds[-1].close, **preds}


def run_all(cfg: PipelineConfig, splits=("test",)) -> dict[str, list[EvalResult]]:
    """ingest, train both models, ensemble, evaluate."""
    ingest(cfg)
    train(cfg, "bilstm")
    train(cfg, "gbdt")
    ensemble(cfg)
    return {s: evaluate(cfg, s) for s in splits}
