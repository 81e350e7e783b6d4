"""Weekly log-revenue forecasting with the hour/day/interaction additive model."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .market_data import (
    DEFAULT_ZONE_OFFSETS,
    DataError,
    LogRevenueSeries,
    format_timestamp,
    rolling_windows,
)
from .spline_gam import BasisKind, BasisSpec, Covariate, GamFit, LAMBDA_GRID, predict, select_lambda_gcv

__all__ = [
    "HOURS_PER_WEEK",
    "BUCKET_EDGES",
    "weekly_specs",
    "ForecastWeek",
    "MapeDistribution",
    "BacktestResult",
    "fit_weekly_model",
    "forecast_week",
    "mape",
    "mape_distribution",
    "backtest",
    "write_backtest",
]

HOURS_PER_WEEK = 168
BUCKET_EDGES = (0.0, 0.05, 0.10, 0.15, float("inf"))
BUCKET_LABELS = ("0-5%", "5-10%", "10-15%", ">15%")


def weekly_specs(hour_k: int = 24, day_k: int = 7, cyclic_hour: bool = False) -> tuple[BasisSpec, ...]:
    """s(hour, cr) + s(day, ps) + ti(hour, day)."""
    hour = BasisSpec(BasisKind.CUBIC_REGRESSION, hour_k, Covariate.HOUR, cyclic_hour)
    day = BasisSpec(BasisKind.P_SPLINE, day_k, Covariate.DAY)
    inter = BasisSpec(BasisKind.TENSOR_INTERACTION, (hour_k, day_k), Covariate.HOUR_DAY, margins=(hour, day))
    return hour, day, inter


def mape(actuals, forecasts) -> float:
    """Mean of |A - F| / |A|. Raises on a zero actual, naming its index."""
    a = np.asarray(actuals, dtype=float)
    f = np.asarray(forecasts, dtype=float)
    if a.shape != f.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {f.shape}")
    if a.size == 0:
        raise ValueError("empty input")
    zero = np.flatnonzero(a == 0)
    if zero.size:
        raise ValueError(f"actual value is zero at index {int(zero[0])}")
    return float(np.mean(np.abs((a - f) / a)))


@dataclass(frozen=True)
class ForecastWeek:
    zone: str
    market: str
    week_index: int
    week_start: datetime
    log_forecast: np.ndarray = field(repr=False)
    actual: np.ndarray | None = field(default=None, repr=False)  # level scale
    log_actual: np.ndarray | None = field(default=None, repr=False)
    scale: str = "level"

    def __post_init__(self):
        if len(self.log_forecast) != HOURS_PER_WEEK:
            raise ValueError(f"a forecast week has {HOURS_PER_WEEK} hours, got {len(self.log_forecast)}")

    @property
    def forecast(self) -> np.ndarray:
        return np.exp(self.log_forecast)

    @property
    def mape(self) -> float | None:
        if self.actual is None:
            return None
        if self.scale == "log":
            return mape(self.log_actual, self.log_forecast)
        return mape(self.actual, self.forecast)

    def scored(self, log_actual) -> "ForecastWeek":
        la = np.asarray(log_actual, dtype=float)
        return ForecastWeek(self.zone, self.market, self.week_index, self.week_start,
                            self.log_forecast, np.exp(la), la, self.scale)


@dataclass(frozen=True)
class MapeDistribution:
    edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def shares(self) -> tuple[float, ...]:
        n = self.total
        return tuple(c / n for c in self.counts) if n else tuple(0.0 for _ in self.counts)

    def to_dict(self) -> dict:
        return {"buckets": list(BUCKET_LABELS), "edges": [e if np.isfinite(e) else "inf" for e in self.edges],
                "counts": list(self.counts), "shares": list(self.shares)}


def mape_distribution(values: Sequence[float], edges=BUCKET_EDGES) -> MapeDistribution:
    """Count weekly MAPEs per bucket; buckets are right-closed, 0 falls in the first."""
    counts = [0] * (len(edges) - 1)
    for v in values:
        for b in range(len(counts)):
            if v <= edges[b + 1] or b == len(counts) - 1:
                counts[b] += 1
                break
    return MapeDistribution(tuple(edges), tuple(counts))


def fit_weekly_model(train: LogRevenueSeries, specs=None, grid=LAMBDA_GRID, min_hours: int = HOURS_PER_WEEK) -> GamFit:
    if len(train) < min_hours:
        raise DataError(f"training window has {len(train)} hours; need at least {min_hours}")
    specs = weekly_specs() if specs is None else specs
    _, fit = select_lambda_gcv(train.value, train.hour, train.day, specs, grid)
    return fit


def week_covariates(week_start: datetime, utc_offset_hours: float = 0) -> tuple[np.ndarray, np.ndarray, list[datetime]]:
    stamps = [week_start + timedelta(hours=i) for i in range(HOURS_PER_WEEK)]
    local = [t + timedelta(hours=utc_offset_hours) for t in stamps]
    return np.array([t.hour for t in local]), np.array([t.weekday() for t in local]), stamps


def forecast_week(fit: GamFit, week_start: datetime, zone: str = "", market: str = "",
                  week_index: int = 0, utc_offset_hours: float | None = None, scale: str = "level") -> ForecastWeek:
    """168 hourly forecasts starting at ``week_start`` (forecasts only, unscored)."""
    if utc_offset_hours is None:
        utc_offset_hours = DEFAULT_ZONE_OFFSETS.get(zone.upper(), 0)
    hours, days, _ = week_covariates(week_start, utc_offset_hours)
    return ForecastWeek(zone, str(market), week_index, week_start, predict(fit, hours, days), scale=scale)


@dataclass
class BacktestResult:
    weeks: list[ForecastWeek]
    fits: list[GamFit]
    distribution: MapeDistribution

    @property
    def mapes(self) -> list[float]:
        return [w.mape for w in self.weeks]

    @property
    def adj_r2(self) -> list[float]:
        return [f.adj_r2 for f in self.fits]

    def summary(self) -> dict:
        r2 = self.adj_r2
        return {
            "windows": len(self.weeks),
            "adj_r2": r2,
            "adj_r2_mean": float(np.mean(r2)) if r2 else None,
            "weekly_mape": [{"week_start": format_timestamp(w.week_start), "mape": w.mape} for w in self.weeks],
            "mape_mean": float(np.mean(self.mapes)) if self.weeks else None,
            "distribution": self.distribution.to_dict(),
        }


def _window_job(args):
    train, test, specs, grid, scale, k = args
    fit = fit_weekly_model(train, specs, grid)
    wk = ForecastWeek(test.zone, test.market.value, k, test.timestamps[0],
                      predict(fit, test.hour, test.day), scale=scale).scored(test.value)
    return fit, wk


def backtest(series: LogRevenueSeries, train_len: int = 336, horizon: int = HOURS_PER_WEEK,
             specs=None, grid=LAMBDA_GRID, scale: str = "level", workers: int = 1) -> BacktestResult:
    """Fit on each rolling window, forecast the following week, score with MAPE."""
    if horizon != HOURS_PER_WEEK:
        raise ValueError("weekly evaluation requires horizon = 168")
    if scale not in ("level", "log"):
        raise ValueError("scale must be 'level' or 'log'")
    jobs = [(series.subset(tr), series.subset(te), specs, grid, scale, k)
            for k, (tr, te) in enumerate(rolling_windows(series, train_len, horizon))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_window_job, jobs))  # map preserves window order
    else:
        results = [_window_job(j) for j in jobs]
    fits = [r[0] for r in results]
    weeks = [r[1] for r in results]
    return BacktestResult(weeks, fits, mape_distribution([w.mape for w in weeks]))


def write_backtest(result: BacktestResult, out_dir: str | Path, zone: str, market: str) -> list[Path]:
    """Per-hour CSV, plot CSV and a JSON summary for one zone/market."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{zone}_{market}".lower()
    hourly = out / f"backtest_{stem}.csv"
    with hourly.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["week_start", "hour", "actual", "forecast", "ape"])
        for wk in result.weeks:
            for h, (a, f) in enumerate(zip(wk.actual, wk.forecast)):
                w.writerow([format_timestamp(wk.week_start), h, repr(float(a)), repr(float(f)), repr(float(abs(a - f) / abs(a)))])
    plot = out / f"plot_actual_vs_forecast_{stem}.csv"
    with plot.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "series", "value"])
        for wk in result.weeks:
            for h in range(HOURS_PER_WEEK):
                ts = format_timestamp(wk.week_start + timedelta(hours=h))
                w.writerow([ts, "actual", repr(float(wk.actual[h]))])
                w.writerow([ts, "forecast", repr(float(wk.forecast[h]))])
    summary = out / f"summary_{stem}.json"
    payload = {"zone": zone, "market": market, **result.summary()}
    summary.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return [hourly, plot, summary]
