"""Synthetic OHLCV series for tests and demos."""
from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from .dataio import OhlcvRecord, SeriesDataset
from .ndcore import Rng


def ohlcv_from_close(close, rng: Rng, start: date = date(2014, 10, 1), wick: float = 0.3) -> SeriesDataset:
    """Wrap a close-price path in plausible open/high/low/volume columns."""
    close = np.asarray(close, dtype=np.float64)
    n = len(close)
    open_ = np.concatenate([[close[0]], close[:-1]])
    top = np.maximum(open_, close) + np.abs(rng.normal(0.0, wick, n))
    bottom = np.minimum(open_, close) - np.abs(rng.normal(0.0, wick, n))
    volume = np.round(1e6 * (1.0 + 0.2 * rng.random(n)))
    records = tuple(
        OhlcvRecord(start + timedelta(days=k), float(open_[k]), float(top[k]), float(bottom[k]), float(volume[k]), float(close[k]))
        for k in range(n)
    )
    return SeriesDataset(records, "synthetic")


def sine_series(n: int = 800, seed: int = 0, level=100.0, amplitude=20.0, period=50.0, noise=0.5, start=date(2014, 10, 1)):
    """``level + amplitude * sin(2 pi t / period) + N(0, noise)`` as OHLCV."""
    rng = Rng(seed, stream=7)
    t = np.arange(n)
    close = level + amplitude * np.sin(2 * np.pi * t / period) + rng.normal(0.0, noise, n)
    return ohlcv_from_close(close, rng, start)
