"""Seeded synthetic data: price regimes, frequency traces and test instances.

The regimes are stand-ins for proprietary market data. "2019" has FCR-N
availability prices that spike around midday and midweek while FCR-D stays
cheap. "2021" has FCR-D prices well above every other market with
occasional spikes.
"""
from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .droop import MarketId, MarketPower, build_meb
from .market_data import FrequencyTrace, Market, series_from_arrays, write_frequency_csv, write_hourly_csv

__all__ = [
    "REGIMES",
    "ou_frequency",
    "regime_prices",
    "gam_benchmark_series",
    "random_tiny_instance",
    "EPOCH",
    "write_toy_data",
]

EPOCH = datetime(2021, 1, 4, tzinfo=timezone.utc)  # a Monday
REGIMES = ("2019", "2021")


def ou_frequency(rng: np.random.Generator, hours: int, theta: float = 0.05, sd: float = 0.04,
                 dips_per_day: float = 0.0, start: datetime = EPOCH) -> FrequencyTrace:
    """Minute samples of a mean-reverting process around 50 Hz.

    ``sd`` is the stationary standard deviation. Optional dips (a drop of
    0.1-0.4 Hz that decays within about 15 minutes) exercise the FCR-D band.
    """
    n = hours * 60
    sigma = sd * np.sqrt(2 * theta)
    dev = np.empty(n)
    x = rng.normal(0.0, sd)
    shocks = rng.normal(0.0, sigma, n)
    for i in range(n):
        x += -theta * x + shocks[i]
        dev[i] = x
    if dips_per_day > 0:
        n_dips = rng.poisson(dips_per_day * hours / 24)
        for at in rng.integers(0, n, n_dips):
            depth = rng.uniform(0.1, 0.4)
            span = np.arange(n - at)
            dev[at:] -= depth * np.exp(-span / 5.0)
    return FrequencyTrace(start, np.clip(50.0 + dev, 49.2, 50.8))


def _midweek(d: np.ndarray) -> np.ndarray:
    return np.exp(-((d - 2.5) ** 2) / 2.0)


def regime_prices(regime: str, hours: int, rng: np.random.Generator, start_day: int = 0) -> dict:
    """Hourly clearing prices per market plus FCR-N energy prices.

    Returns a dict with a price array per :class:`MarketId` plus ``c_up`` and
    ``c_down``. Spot legs share one price series.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {REGIMES}")
    t = np.arange(hours)
    h = t % 24
    d = (start_day + t // 24) % 7
    noise = lambda scale: np.exp(rng.normal(0.0, scale, hours))  # noqa: E731
    spot = (32 + 10 * np.sin(2 * np.pi * (h - 9) / 24) + 4 * (d < 5)) * noise(0.08)
    midday = np.exp(-((h - 12.5) ** 2) / 8.0)
    if regime == "2019":
        n = (16 + 30 * midday * (0.6 + 0.8 * _midweek(d))) * noise(0.10)
        dd = 3 + 2 * rng.random(hours)
    else:
        n = (14 + 6 * midday) * noise(0.10)
        spikes = rng.random(hours) < 0.15
        dd = (38 + 8 * np.sin(2 * np.pi * h / 24) + 40 * spikes) * noise(0.10)
        spot = spot * 1.25
    return {
        MarketId.N: n,
        MarketId.D: dd,
        MarketId.S_DCH: spot,
        MarketId.S_CH: spot.copy(),
        "c_up": spot * 1.15,
        "c_down": spot * 0.25,
    }


def gam_benchmark_series(rng: np.random.Generator, weeks: int = 4, noise_sd: float = 0.05):
    """Log-revenue benchmark: two main effects, one interaction, Gaussian noise.

    Returns ``(hours, days, y)`` for ``weeks`` consecutive weeks starting on a Monday.
    """
    n = weeks * 168
    t = np.arange(n)
    hours = t % 24
    days = (t // 24) % 7
    y = (0.8 * np.sin(2 * np.pi * hours / 24) + 0.4 * np.cos(2 * np.pi * days / 7)
         + 0.2 * np.sin(2 * np.pi * hours / 24) * np.cos(2 * np.pi * days / 7)
         + rng.normal(0.0, noise_sd, n))
    return hours, days, y


def random_tiny_instance(rng: np.random.Generator, hours=(2, 3), scenarios=(1, 2), pairs=(2, 3),
                         dt_minutes: int = 15, firm_spot: bool | None = None, soc_mode: str | None = None):
    """Small random instance within the brute-force oracle's reach."""
    from .scheduling import BessParams, BidStructure, Scenario, build_instance

    H = int(rng.integers(hours[0], hours[1] + 1))
    S = int(rng.integers(scenarios[0], scenarios[1] + 1))
    K = int(rng.integers(pairs[0], pairs[1] + 1))
    pool = [MarketPower(m, p) for m in MarketId for p in ((0.9, 0.6, 0.3) if m.is_freq else (0.8, 0.6, 0.4))]
    chosen = tuple(pool[i] for i in sorted(rng.choice(len(pool), K, replace=False)))
    traces = [ou_frequency(rng, H, sd=float(rng.uniform(0.02, 0.08)), dips_per_day=float(rng.choice([0.0, 24.0])))
              for _ in range(S)]
    probs = rng.dirichlet(np.ones(S))
    probs[-1] = 1.0 - probs[:-1].sum()
    scs = []
    for s in range(S):
        prices = {m: rng.uniform(0, 60, H) for m in MarketId}
        if s and rng.random() < 0.3:  # ties across scenarios exercise the free-acceptance boundary
            prices[MarketId.N] = scs[0].clearing_prices[MarketId.N].copy()
        scs.append(Scenario(float(probs[s]), prices, rng.uniform(0, 80, H), rng.uniform(0, 80, H), traces[s]))
    params = BessParams(
        dt_minutes=dt_minutes, horizon_hours=H,
        soc_mode=soc_mode or str(rng.choice(["fixed", "flexible"])),
        firm_spot=bool(rng.random() < 0.5) if firm_spot is None else firm_spot,
    )
    structure = BidStructure(chosen)
    mebs = build_meb(traces, chosen, dt_minutes)
    return build_instance(params, structure, scs, mebs)


def day_start(day_index: int) -> datetime:
    return EPOCH + timedelta(days=day_index)


def write_toy_data(root, seed: int = 0, weeks: int = 5, zone: str = "DK1", n_scenarios: int = 2) -> list[Path]:
    """Small on-disk dataset: hourly price/volume CSVs, minute traces and a scenario file.

    Layout under ``root``: ``prices/<zone>_<market>.csv``, ``freq/s<i>.csv`` and
    ``scenarios.json`` (the first day after the price history).
    """
    root = Path(root)
    (root / "prices").mkdir(parents=True, exist_ok=True)
    (root / "freq").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    hours = weeks * 168
    prices = regime_prices("2019", hours + 24, rng)
    written = []
    for market, key, vol in ((Market.SPOT, MarketId.S_DCH, 900.0), (Market.FCR_N, MarketId.N, 120.0)):
        vols = vol * np.exp(rng.normal(0.0, 0.05, hours))
        series = series_from_arrays(zone, market, EPOCH, np.round(prices[key][:hours], 4), np.round(vols, 3))
        path = root / "prices" / f"{zone}_{market.value}.csv".lower()
        write_hourly_csv(series, path)
        written.append(path)
    day = slice(hours, hours + 24)
    start = EPOCH + timedelta(hours=hours)
    items = []
    for s in range(n_scenarios):
        tr = ou_frequency(rng, 24, sd=0.04 + 0.02 * s, dips_per_day=2.0, start=start)
        tr = FrequencyTrace(start, np.round(tr.values, 4))
        fpath = root / "freq" / f"s{s}.csv"
        write_frequency_csv(tr, fpath)
        written.append(fpath)
        jitter = np.exp(rng.normal(0.0, 0.05, 24))
        items.append({
            "probability": 1.0 / n_scenarios if s < n_scenarios - 1 else 1.0 - (n_scenarios - 1) / n_scenarios,
            "clearing_prices": {m.value: [round(float(v), 4) for v in prices[m][day] * (jitter if m.is_freq else 1.0)]
                                for m in MarketId},
            "c_up": [round(float(v), 4) for v in prices["c_up"][day]],
            "c_down": [round(float(v), 4) for v in prices["c_down"][day]],
            "frequency_trace": f"freq/s{s}.csv",
        })
    spath = root / "scenarios.json"
    spath.write_text(json.dumps(items, indent=2) + "\n")
    written.append(spath)
    return written
