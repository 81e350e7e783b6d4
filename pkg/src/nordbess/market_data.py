"""Hourly market series and minute frequency traces.

CSV is the only ingestion format. Column names come from a ``ColumnSchema``
so that differently shaped public exports can be read without code changes.
All timestamps are handled in UTC; zone-local hour-of-day and day-of-week
are derived with a fixed per-zone offset.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DataError",
    "Market",
    "ColumnSchema",
    "HourlyRecord",
    "HourlySeries",
    "Rejection",
    "LogRevenueSeries",
    "FrequencyTrace",
    "DEFAULT_ZONE_OFFSETS",
    "load_hourly_csv",
    "write_hourly_csv",
    "to_log_revenue",
    "load_frequency_csv",
    "write_frequency_csv",
    "rolling_windows",
    "write_rejections",
]

HOUR = timedelta(hours=1)
MINUTE = timedelta(minutes=1)
FREQ_MIN_HZ = 49.0
FREQ_MAX_HZ = 51.0

# Fixed standard-time offsets (hours east of UTC). DST is deliberately ignored.
DEFAULT_ZONE_OFFSETS = {"DK": 1, "DK1": 1, "DK2": 1, "SE": 1, "NO": 1, "FI": 2}


class DataError(ValueError):
    """Raised for malformed input data. ``problems`` holds (line, reason) pairs."""

    def __init__(self, message: str, problems: Sequence[tuple[int, str]] = ()):
        self.problems = list(problems)
        if self.problems:
            detail = "; ".join(f"line {ln}: {why}" for ln, why in self.problems[:10])
            message = f"{message} ({detail})"
        super().__init__(message)


class Market(str, Enum):
    SPOT = "SPOT"
    FCR_N = "FCR_N"


@dataclass(frozen=True)
class ColumnSchema:
    timestamp: str = "timestamp"
    price: str = "price"
    volume: str = "volume"


@dataclass(frozen=True)
class HourlyRecord:
    timestamp: datetime
    price: float
    volume: float
    line: int = 0


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str

    def to_dict(self) -> dict:
        return {"line": self.line, "reason": self.reason}


@dataclass(frozen=True)
class HourlySeries:
    zone: str
    market: Market
    records: tuple[HourlyRecord, ...]
    gaps: tuple[datetime, ...] = ()  # timestamps after which at least one hour is missing
    flagged: tuple[Rejection, ...] = ()  # rows unusable for a log-revenue target

    def __len__(self) -> int:
        return len(self.records)

    @property
    def timestamps(self) -> list[datetime]:
        return [r.timestamp for r in self.records]

    @property
    def prices(self) -> np.ndarray:
        return np.array([r.price for r in self.records], dtype=float)

    @property
    def volumes(self) -> np.ndarray:
        return np.array([r.volume for r in self.records], dtype=float)


def _readonly(a) -> np.ndarray:
    arr = np.array(a)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LogRevenueSeries:
    """ln(price * volume) per usable hour with its calendar covariates."""

    zone: str
    market: Market
    timestamps: tuple[datetime, ...]
    hour: np.ndarray
    day: np.ndarray
    value: np.ndarray
    rejected: tuple[Rejection, ...] = ()

    def __len__(self) -> int:
        return len(self.value)

    def subset(self, idx) -> "LogRevenueSeries":
        idx = np.asarray(idx)
        return LogRevenueSeries(
            self.zone,
            self.market,
            tuple(self.timestamps[i] for i in idx),
            _readonly(self.hour[idx]),
            _readonly(self.day[idx]),
            _readonly(self.value[idx]),
        )


@dataclass(frozen=True)
class FrequencyTrace:
    start: datetime
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise DataError("frequency trace must be one-dimensional")
        if len(vals) % 60:
            raise DataError(f"frequency trace length {len(vals)} is not a whole number of hours")
        bad = np.flatnonzero(~((vals >= FREQ_MIN_HZ) & (vals <= FREQ_MAX_HZ)))
        if bad.size:
            raise DataError(
                "frequency out of range",
                [(int(i), f"sample {i} = {vals[i]} Hz outside [{FREQ_MIN_HZ}, {FREQ_MAX_HZ}]") for i in bad],
            )
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def hours(self) -> int:
        return len(self.values) // 60

    def window(self, start_hour: int, hours: int) -> "FrequencyTrace":
        a, b = start_hour * 60, (start_hour + hours) * 60
        if b > len(self.values):
            raise DataError(f"trace has {self.hours} h; requested hours {start_hour}..{start_hour + hours}")
        return FrequencyTrace(self.start + timedelta(minutes=a), self.values[a:b])


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp and normalize it to aware UTC."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def load_hourly_csv(
    path: str | Path,
    schema: ColumnSchema = ColumnSchema(),
    zone: str = "",
    market: Market | str = Market.SPOT,
) -> HourlySeries:
    """Read and validate an hourly price/volume CSV.

    Malformed timestamps, non-numeric values, duplicates and non-hourly
    timestamps raise ``DataError`` listing every offending line. Rows with
    nonpositive price or volume are kept but flagged; ``to_log_revenue``
    excludes them.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    market = Market(market)
    problems: list[tuple[int, str]] = []
    records: list[HourlyRecord] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in (schema.timestamp, schema.price, schema.volume) if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for line, row in enumerate(reader, start=2):
            try:
                ts = parse_timestamp(row[schema.timestamp])
            except (ValueError, TypeError):
                problems.append((line, f"malformed timestamp {row[schema.timestamp]!r}"))
                continue
            if ts.minute or ts.second or ts.microsecond:
                problems.append((line, f"timestamp {row[schema.timestamp]!r} is not an hour start"))
                continue
            try:
                price = _parse_float(row[schema.price])
                volume = _parse_float(row[schema.volume])
            except (ValueError, TypeError):
                problems.append((line, f"non-numeric price/volume {row[schema.price]!r}, {row[schema.volume]!r}"))
                continue
            records.append(HourlyRecord(ts, price, volume, line))

    seen: dict[datetime, int] = {}
    for rec in records:
        if rec.timestamp in seen:
            problems.append((rec.line, f"duplicate timestamp {format_timestamp(rec.timestamp)} (first at line {seen[rec.timestamp]})"))
        else:
            seen[rec.timestamp] = rec.line
    if not problems:
        for prev, cur in zip(records, records[1:]):
            if cur.timestamp <= prev.timestamp:
                problems.append((cur.line, "timestamps not strictly increasing"))
    if problems:
        raise DataError(f"{path}: invalid hourly data", sorted(problems))
    return _make_series(zone, market, records)


def _make_series(zone: str, market: Market, records: Sequence[HourlyRecord]) -> HourlySeries:
    gaps = tuple(a.timestamp for a, b in zip(records, records[1:]) if b.timestamp - a.timestamp != HOUR)
    flagged = tuple(
        Rejection(r.line, f"nonpositive price*volume (price={r.price}, volume={r.volume})")
        for r in records
        if not (r.price > 0 and r.volume > 0)
    )
    return HourlySeries(zone, market, tuple(records), gaps, flagged)


def series_from_arrays(zone, market, start: datetime, prices, volumes) -> HourlySeries:
    """Build a gap-free series from arrays (used for synthetic data)."""
    start = start.astimezone(timezone.utc)
    recs = [
        HourlyRecord(start + i * HOUR, float(p), float(v), i + 2)
        for i, (p, v) in enumerate(zip(prices, volumes))
    ]
    return _make_series(zone, Market(market), recs)


def write_hourly_csv(series: HourlySeries, path: str | Path, schema: ColumnSchema = ColumnSchema()) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([schema.timestamp, schema.price, schema.volume])
        for r in series.records:
            w.writerow([format_timestamp(r.timestamp), repr(r.price), repr(r.volume)])


def to_log_revenue(series: HourlySeries, utc_offset_hours: float | None = None) -> LogRevenueSeries:
    """ln(price * volume) per hour; nonpositive rows are dropped and reported."""
    if utc_offset_hours is None:
        utc_offset_hours = DEFAULT_ZONE_OFFSETS.get(series.zone.upper(), 0)
    offset = timedelta(hours=utc_offset_hours)
    ts, hours, days, vals, rejected = [], [], [], [], []
    for r in series.records:
        product = r.price * r.volume
        if not (r.price > 0 and r.volume > 0 and product > 0):
            rejected.append(Rejection(r.line, f"nonpositive price*volume (price={r.price}, volume={r.volume})"))
            continue
        local = r.timestamp + offset
        ts.append(r.timestamp)
        hours.append(local.hour)
        days.append(local.weekday())
        vals.append(math.log(product))
    return LogRevenueSeries(
        series.zone,
        series.market,
        tuple(ts),
        _readonly(np.array(hours, dtype=int)),
        _readonly(np.array(days, dtype=int)),
        _readonly(np.array(vals, dtype=float)),
        tuple(rejected),
    )


def write_rejections(rejections: Iterable[Rejection], path: str | Path) -> None:
    """JSON lines, one ``{"line", "reason"}`` object per rejected row."""
    with Path(path).open("w") as fh:
        for rej in rejections:
            fh.write(json.dumps(rej.to_dict(), sort_keys=True) + "\n")


def load_frequency_csv(path: str | Path) -> FrequencyTrace:
    """Two columns (timestamp, hz) at one-minute cadence."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    stamps: list[datetime] = []
    values: list[float] = []
    problems: list[tuple[int, str]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DataError(f"{path}: expected header with timestamp and hz columns")
        for line, row in enumerate(reader, start=2):
            try:
                stamps.append(parse_timestamp(row[0]))
                values.append(_parse_float(row[1]))
            except (ValueError, IndexError):
                problems.append((line, f"malformed row {row!r}"))
    if problems:
        raise DataError(f"{path}: invalid frequency data", problems)
    if not stamps:
        raise DataError(f"{path}: empty frequency trace")
    for i, (a, b) in enumerate(zip(stamps, stamps[1:])):
        if b - a != MINUTE:
            problems.append((i + 3, f"minute gap between {format_timestamp(a)} and {format_timestamp(b)}"))
    if problems:
        raise DataError(f"{path}: non-contiguous minute cadence", problems)
    return FrequencyTrace(stamps[0], np.array(values))


def write_frequency_csv(trace: FrequencyTrace, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "hz"])
        for i, v in enumerate(trace.values):
            w.writerow([format_timestamp(trace.start + i * MINUTE), repr(float(v))])


def rolling_windows(series, train_len: int = 336, horizon: int = 168) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, test) index arrays; windows advance by ``horizon`` hours.

    ``series`` may be any sized object or an integer length.
    """
    n = series if isinstance(series, (int, np.integer)) else len(series)
    if train_len <= 0 or horizon <= 0:
        raise ValueError("train_len and horizon must be positive")
    if n < train_len + horizon:
        raise DataError(f"series of {n} hours is shorter than train_len + horizon = {train_len + horizon}")
    count = (n - train_len) // horizon
    return [
        (np.arange(k * horizon, k * horizon + train_len), np.arange(k * horizon + train_len, k * horizon + train_len + horizon))
        for k in range(count)
    ]
