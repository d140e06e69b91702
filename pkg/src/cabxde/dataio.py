"""OHLCV ingestion: CSV parsing, min-max scaling, windowing and splits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date, datetime
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError

COLUMNS = ("Date", "Open", "High", "Low", "Volume", "Close")
FEATURES = ("open", "high", "low", "volume", "close")
DEFAULT_DATE_FORMAT = "%m/%d/%Y"


@dataclass(frozen=True)
class OhlcvRecord:
    date: date
    open: float
    high: float
    low: float
    volume: float
    close: float

    def validate(self, row=None):
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(v) and v > 0 for v in prices):
            raise DataError("prices must be finite and positive", row)
        if not (math.isfinite(self.volume) and self.volume >= 0):
            raise DataError("volume must be finite and non-negative", row)
        if not (self.low <= self.open <= self.high and self.low <= self.close <= self.high):
            raise DataError(
                f"OHLC ordering violated (open={self.open}, high={self.high}, "
                f"low={self.low}, close={self.close})",
                row,
            )


@dataclass(frozen=True)
class SeriesDataset:
    records: tuple[OhlcvRecord, ...]
    source_id: str = ""

    def __post_init__(self):
        if not self.records:
            raise DataError("no records")
        for i in range(1, len(self.records)):
            if self.records[i].date <= self.records[i - 1].date:
                raise DataError("dates must be strictly increasing", i + 1)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return SeriesDataset(self.records[item], self.source_id)
        return self.records[item]

    @property
    def dates(self) -> list[date]:
        return [r.date for r in self.records]

    def column(self, name: str) -> np.ndarray:
        if name not in FEATURES:
            raise ConfigError(f"unknown feature {name!r}")
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def matrix(self, features: Sequence[str] = FEATURES) -> np.ndarray:
        return np.column_stack([self.column(f) for f in features])


def _parse_float(text: str, field: str, row: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"malformed number {text!r} in column {field}", row) from None


def parse_csv(text, date_format: str = DEFAULT_DATE_FORMAT, source_id: str = "") -> SeriesDataset:
    """Parse ``Date,Open,High,Low,Volume,Close`` text into a sorted dataset.

    Row numbers in error messages are 1-based file lines (header = 1).
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = None
    records = []
    seen = {}
    for line_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip() for c in row]
            if header and header[0].startswith("﻿"):
                header[0] = header[0][1:]
            if tuple(h.lower() for h in header) != tuple(c.lower() for c in COLUMNS):
                raise DataError(f"header must be {','.join(COLUMNS)}, got {','.join(header)}", line_no)
            continue
        if len(row) != len(COLUMNS):
            raise DataError(f"expected {len(COLUMNS)} fields, got {len(row)}", line_no)
        raw_date = row[0].strip()
        try:
            d = datetime.strptime(raw_date, date_format).date()
        except ValueError:
            raise DataError(f"unparseable date {raw_date!r} for format {date_format!r}", line_no) from None
        if d in seen:
            raise DataError(f"duplicate date {d.isoformat()} (first seen on row {seen[d]})", line_no)
        seen[d] = line_no
        vals = [_parse_float(row[k].strip(), COLUMNS[k], line_no) for k in range(1, 6)]
        rec = OhlcvRecord(d, *vals)
        rec.validate(line_no)
        records.append(rec)
    if not records:
        raise DataError("no records")
    records.sort(key=lambda r: r.date)
    return SeriesDataset(tuple(records), source_id)


def read_csv(path, date_format: str = DEFAULT_DATE_FORMAT) -> SeriesDataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read(), date_format, source_id=str(path))


def to_csv(dataset: SeriesDataset, date_format: str = DEFAULT_DATE_FORMAT) -> str:
    """Serialise back to CSV; floats use ``repr`` so values round-trip exactly."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in dataset.records:
        writer.writerow(
            [r.date.strftime(date_format)]
            + [repr(float(getattr(r, f))) for f in ("open", "high", "low", "volume", "close")]
        )
    return out.getvalue()


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature column extremes for min-max scaling."""

    features: tuple[str, ...]
    v_min: tuple[float, ...]
    v_max: tuple[float, ...]

    def _index(self, feature: str) -> int:
        try:
            return self.features.index(feature)
        except ValueError:
            raise ConfigError(f"scaler was not fitted on feature {feature!r}") from None

    def scale(self, v, feature: str = "close"):
        k = self._index(feature)
        lo, hi = self.v_min[k], self.v_max[k]
        out = (np.asarray(v, dtype=np.float64) - lo) / (hi - lo)
        return float(out) if out.ndim == 0 else out

    def inverse_scale(self, v, feature: str = "close"):
        k = self._index(feature)
        lo, hi = self.v_min[k], self.v_max[k]
        out = np.asarray(v, dtype=np.float64) * (hi - lo) + lo
        return float(out) if out.ndim == 0 else out

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        """Scale an ``(n, len(features))`` matrix column-wise."""
        lo = np.asarray(self.v_min)
        span = np.asarray(self.v_max) - lo
        return (np.asarray(matrix, dtype=np.float64) - lo) / span

    def to_dict(self) -> dict:
        return {"features": list(self.features), "v_min": list(self.v_min), "v_max": list(self.v_max)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(tuple(d["features"]), tuple(float(x) for x in d["v_min"]), tuple(float(x) for x in d["v_max"]))


def fit_scaler(dataset: SeriesDataset, features: Sequence[str] = FEATURES) -> ScalerParams:
    lows, highs = [], []
    for f in features:
        col = dataset.column(f)
        lo, hi = float(col.min()), float(col.max())
        if not hi > lo:
            raise DataError(f"degenerate scaler: column {f!r} is constant ({lo})")
        lows.append(lo)
        highs.append(hi)
    return ScalerParams(tuple(features), tuple(lows), tuple(highs))


def scale(v: float, params: ScalerParams, feature: str = "close") -> float:
    return params.scale(v, feature)


def inverse_scale(v: float, params: ScalerParams, feature: str = "close") -> float:
    return params.inverse_scale(v, feature)


@dataclass(frozen=True)
class WindowedSample:
    inputs: np.ndarray  # (time_step, n_features)
    target: float
    target_row: int


@dataclass(frozen=True)
class WindowSet:
    """Stacked windows: ``inputs`` is (n, time_step, n_features)."""

    inputs: np.ndarray
    targets: np.ndarray
    target_rows: np.ndarray

    def __len__(self):
        return len(self.targets)

    def __getitem__(self, k):
        if isinstance(k, (slice, np.ndarray, list)):
            return WindowSet(self.inputs[k], self.targets[k], self.target_rows[k])
        return WindowedSample(self.inputs[k], float(self.targets[k]), int(self.target_rows[k]))

    def __iter__(self) -> Iterator[WindowedSample]:
        return (self[k] for k in range(len(self)))

    @property
    def time_step(self) -> int:
        return self.inputs.shape[1]

    def flattened(self) -> np.ndarray:
        """Row-per-window view for tree models (time-major, then feature)."""
        return self.inputs.reshape(len(self), -1)

    def select_rows(self, first: int, stop: int) -> "WindowSet":
        """Windows whose target row lies in ``[first, stop)``."""
        keep = (self.target_rows >= first) & (self.target_rows < stop)
        return self[np.flatnonzero(keep)]


def make_windows(values: np.ndarray, time_step: int, target_col: int = -1) -> WindowSet:
    """Slide a ``time_step`` window over scaled rows.

    Sample k takes rows ``[k, k + time_step)`` as inputs and the target
    column of row ``k + time_step`` as its target.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DataError("windowing expects a (rows, features) matrix")
    if time_step < 1:
        raise ConfigError("time_step must be positive")
    n = values.shape[0]
    if n <= time_step:
        raise DataError(f"insufficient data: {n} rows cannot form a window of time_step {time_step} plus a target")
    view = np.lib.stride_tricks.sliding_window_view(values, time_step, axis=0)
    # sliding_window_view puts the window axis last
    inputs = np.ascontiguousarray(view[: n - time_step].transpose(0, 2, 1))
    rows = np.arange(time_step, n)
    return WindowSet(inputs, values[time_step:, target_col].copy(), rows)


def train_size(n: int, fraction: float) -> int:
    # the epsilon absorbs products like 0.29 * 100 = 28.999999999999996
    return math.floor(n * fraction + 1e-9)


def chrono_split(dataset: SeriesDataset, train_fraction: float):
    """First ``floor(N * fraction)`` rows train, the rest test. No shuffling."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = train_size(len(dataset), train_fraction)
    if n_train == 0 or n_train == len(dataset):
        raise DataError(f"split of {len(dataset)} rows at {train_fraction} leaves an empty side")
    return dataset[:n_train], dataset[n_train:]
