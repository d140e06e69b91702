"""Forecast error statistics in price units."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DataError


def _pair(real, pred):
    r = np.asarray(real, dtype=np.float64).ravel()
    p = np.asarray(pred, dtype=np.float64).ravel()
    if r.shape != p.shape:
        raise DataError(f"series lengths differ: {r.size} vs {p.size}")
    if r.size == 0:
        raise DataError("empty series")
    return r, p


def mape(real, pred) -> float:
    """Mean absolute percentage error as a fraction (0.01 means 1%)."""
    r, p = _pair(real, pred)
    if np.any(r == 0):
        raise DataError("MAPE undefined: a real value equals zero")
    return float(np.mean(np.abs(r - p) / r))


def mae(real, pred) -> float:
    r, p = _pair(real, pred)
    return float(np.mean(np.abs(r - p)))


def rmse(real, pred) -> float:
    r, p = _pair(real, pred)
    d = r - p
    return float(np.sqrt(np.mean(d * d)))


@dataclass(frozen=True)
class EvalResult:
    model: str
    mape: float
    mae: float
    rmse: float
    n: int

    @property
    def mape_percent(self) -> float:
        return 100.0 * self.mape


def evaluate(model: str, real, pred) -> EvalResult:
    r, _ = _pair(real, pred)
    return EvalResult(model, mape(real, pred), mae(real, pred), rmse(real, pred), int(r.size))


def report_csv(results) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["model", "mape", "mae", "rmse", "n"])
    for e in results:
        w.writerow([e.model, repr(e.mape), repr(e.mae), repr(e.rmse), e.n])
    return out.getvalue()


def format_table(results) -> str:
    lines = [f"{'model':<12}{'MAPE':>12}{'MAPE%':>10}{'MAE':>12}{'RMSE':>12}{'n':>7}"]
    for e in results:
        lines.append(f"{e.model:<12}{e.mape:>12.6f}{e.mape_percent:>10.4f}{e.mae:>12.4f}{e.rmse:>12.4f}{e.n:>7d}")
    return "\n".join(lines)
