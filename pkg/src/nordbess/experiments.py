"""Study designs: forecast-driven vs original-price bidding, bid structures and SOC modes.

Each run solves one day-ahead instance per day of the horizon. With GAM
scenarios the bids (pairs and prices) chosen on forecasts are settled
against the realized prices by re-solving the dispatch with the bids fixed.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .droop import DroopConfig, MarketId, build_meb
from .forecaster import HOURS_PER_WEEK, weekly_specs
from .market_data import DataError, FrequencyTrace, format_timestamp
from .milp.lp import SolveOptions, SolveStatus
from .scheduling import (
    BID_MAX_FACTOR,
    FREQ_LEVELS,
    SPOT_LEVELS,
    BessParams,
    BidStructure,
    MilpInstance,
    Scenario,
    Solution,
    build_instance,
    settle,
    solve_instance,
)
from .spline_gam import LAMBDA_GRID, predict, select_lambda_gcv
from .synthetic import EPOCH, REGIMES, ou_frequency, regime_prices

__all__ = [
    "ExperimentSpec",
    "ExperimentData",
    "DayResult",
    "ExperimentReport",
    "make_data",
    "gam_price_forecast",
    "run_experiment",
    "compare",
    "SHARE_KEYS",
]

SHARE_KEYS = ("N", "D", "S_DCH", "S_CH", "idle")
PRICE_KEYS = (MarketId.N.value, MarketId.D.value, MarketId.S_DCH.value, MarketId.S_CH.value, "c_up", "c_down")
LOG_FLOOR = 1e-2  # prices are floored here before taking logs


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "run"
    regime: str = "2019"
    source: str = "original"  # original | gam
    structure: str = "single"  # single | multi
    soc_mode: str = "fixed"
    weeks: int = 1
    days_per_week: int = 7
    n_scenarios: int = 1  # equiprobable frequency scenarios
    dt_minutes: int = 60
    firm_spot: bool = True
    seed: int = 0
    history_weeks: int = 2
    freq_levels: tuple[float, ...] = FREQ_LEVELS
    spot_levels: tuple[float, ...] = SPOT_LEVELS
    dips_per_day: float = 1.0
    rel_gap: float = 1e-6
    time_limit: float = 300.0
    workers: int = 1

    def __post_init__(self):
        if self.source not in ("original", "gam"):
            raise ValueError("source must be 'original' or 'gam'")
        if self.structure not in ("single", "multi"):
            raise ValueError("structure must be 'single' or 'multi'")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if not 1 <= self.days_per_week <= 7 or self.weeks < 1 or self.n_scenarios < 1:
            raise ValueError("need weeks >= 1, 1 <= days_per_week <= 7 and n_scenarios >= 1")
        if self.source == "gam" and self.history_weeks < 1:
            raise ValueError("GAM scenarios need at least one week of history")
        object.__setattr__(self, "freq_levels", tuple(float(v) for v in self.freq_levels))
        object.__setattr__(self, "spot_levels", tuple(float(v) for v in self.spot_levels))

    def bid_structure(self, bid_max: float | None = None) -> BidStructure:
        if self.structure == "single":
            return BidStructure.single(self.freq_levels[0], self.spot_levels[0], bid_max=bid_max)
        return BidStructure.multi(self.freq_levels, self.spot_levels, bid_max=bid_max)

    def params(self) -> BessParams:
        return BessParams(dt_minutes=self.dt_minutes, horizon_hours=24, soc_mode=self.soc_mode, firm_spot=self.firm_spot)

    def options(self) -> SolveOptions:
        return SolveOptions(rel_gap=self.rel_gap, time_limit=self.time_limit, log_every=0)

    def day_indices(self) -> list[int]:
        return [w * 7 + d for w in range(self.weeks) for d in range(self.days_per_week)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ExperimentData:
    """Hourly prices from the start of the history through the last evaluated week.

    ``prices`` maps the market ids plus ``c_up``/``c_down`` to arrays.
    ``traces[d][s]`` is the frequency trace of scenario ``s`` on evaluated day ``d``.
    """

    prices: dict[str, np.ndarray]
    history_hours: int
    traces: dict[int, list[FrequencyTrace]] = field(repr=False)

    def __post_init__(self):
        missing = [k for k in PRICE_KEYS if k not in self.prices]
        if missing:
            raise DataError(f"experiment data lacks price series {missing}")
        self.prices = {k: np.asarray(self.prices[k], dtype=float) for k in PRICE_KEYS}
        n = {len(v) for v in self.prices.values()}
        if len(n) != 1:
            raise DataError("experiment price series differ in length")
        if self.history_hours % 24:
            raise DataError("history must cover whole days")

    @property
    def hours(self) -> int:
        return len(self.prices["c_up"])

    def day_prices(self, day: int) -> dict[str, np.ndarray]:
        a = self.history_hours + 24 * day
        if a + 24 > self.hours:
            raise DataError(f"day {day} lies beyond the price data")
        return {k: v[a:a + 24] for k, v in self.prices.items()}


def make_data(spec: ExperimentSpec) -> ExperimentData:
    """Synthetic regime data; depends only on regime, seed, horizon and scenario count."""
    root = np.random.SeedSequence([spec.seed, REGIMES.index(spec.regime)])
    price_ss, freq_ss = root.spawn(2)
    hours = (spec.history_weeks + spec.weeks) * HOURS_PER_WEEK
    raw = regime_prices(spec.regime, hours, np.random.default_rng(price_ss))
    prices = {(k.value if isinstance(k, MarketId) else k): v for k, v in raw.items()}
    dips = spec.dips_per_day * (3.0 if spec.regime == "2021" else 1.0)
    traces = {}
    for d, ss in zip(range(spec.weeks * 7), freq_ss.spawn(spec.weeks * 7)):
        rng = np.random.default_rng(ss)
        start = EPOCH + timedelta(hours=spec.history_weeks * HOURS_PER_WEEK + 24 * d)
        traces[d] = [ou_frequency(rng, 24, dips_per_day=dips, start=start) for _ in range(spec.n_scenarios)]
    return ExperimentData(prices, spec.history_weeks * HOURS_PER_WEEK, traces)


def gam_price_forecast(data: ExperimentData, week: int, train_hours: int = 2 * HOURS_PER_WEEK) -> dict[str, np.ndarray]:
    """One-week-ahead forecast of every price series from the preceding window.

    Each series is modelled on the log scale with the hour/day/interaction
    additive model; hour and day covariates assume the data start on a Monday.
    """
    a = data.history_hours + week * HOURS_PER_WEEK
    lo = max(0, a - train_hours)
    if a - lo < HOURS_PER_WEEK:
        raise DataError(f"week {week}: need at least one week of history, have {a - lo} h")
    t_train = np.arange(lo, a)
    t_test = np.arange(a, a + HOURS_PER_WEEK)
    specs = weekly_specs()
    out = {}
    for key in PRICE_KEYS:
        if key == MarketId.S_CH.value and np.array_equal(data.prices[key], data.prices[MarketId.S_DCH.value]):
            out[key] = out[MarketId.S_DCH.value].copy()
            continue
        y = np.log(np.maximum(data.prices[key][lo:a], LOG_FLOOR))
        _, fit = select_lambda_gcv(y, t_train % 24, (t_train // 24) % 7, specs, LAMBDA_GRID)
        out[key] = np.exp(predict(fit, t_test % 24, (t_test // 24) % 7))
    return out


def _scenarios(prices: dict[str, np.ndarray], traces: Sequence[FrequencyTrace]) -> list[Scenario]:
    S = len(traces)
    probs = [1.0 / S] * S
    probs[-1] = 1.0 - sum(probs[:-1])
    cp = {MarketId(k): prices[k] for k in PRICE_KEYS[:4]}
    return [Scenario(probs[s], cp, prices["c_up"], prices["c_down"], traces[s]) for s in range(S)]


@dataclass
class DayResult:
    day: int
    date: str
    status: str
    nodes: int
    planned_objective: float | None  # None when no schedule was found
    profit: float
    cost: float
    acceptance_hours: float
    shares: dict[str, float]  # accepted market per hour, probability weighted
    bid_shares: dict[str, float]  # market bid per hour, regardless of acceptance
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _shares(sol: Solution, inst: MilpInstance) -> tuple[dict, dict, float]:
    pairs = inst.structure.pairs
    H = inst.n_hours
    probs = np.array([sc.probability for sc in inst.scenarios])
    acc = np.round(sol.x_acc)  # [s, h, k]
    share = dict.fromkeys(SHARE_KEYS, 0.0)
    bids = dict.fromkeys(SHARE_KEYS, 0.0)
    for h, k in enumerate(sol.bid_pairs()):
        key = "idle" if k is None else pairs[k].market.value
        bids[key] += 100.0 / H
        w_acc = 0.0 if k is None else float(probs @ acc[:, h, k])
        if k is not None:
            share[key] += 100.0 * w_acc / H
        share["idle"] += 100.0 * (1.0 - w_acc) / H
    hours = float(probs @ acc.sum(axis=(1, 2)))
    return share, bids, hours


def _fixed_bids(inst: MilpInstance, sol: Solution) -> MilpInstance:
    """Copy of ``inst`` whose bid pairs and prices are pinned to ``sol``."""
    lp = inst.lp
    lb, ub = lp.lb.copy(), lp.ub.copy()
    for name in ("x_bid", "x_price"):
        idx = np.asarray(inst.index[name]).ravel()
        vals = np.asarray(getattr(sol, name)).ravel()
        if name == "x_bid":
            vals = np.round(vals)
        vals = np.clip(vals, lb[idx], ub[idx])
        lb[idx] = ub[idx] = vals
    return dataclasses.replace(inst, lp=dataclasses.replace(lp, lb=lb, ub=ub))


def _bid_max(*price_sets: dict[str, np.ndarray]) -> float | None:
    top = max(float(np.max(p[k])) for p in price_sets for k in PRICE_KEYS[:4])
    return BID_MAX_FACTOR * top if top > 0 else None


def _run_day(job) -> DayResult:
    spec, day, actual, forecast, traces = job
    params = spec.params()
    options = spec.options()
    flags = []
    plan_prices = forecast if forecast is not None else actual
    structure = spec.bid_structure(_bid_max(actual, plan_prices) if forecast is not None else None)
    mebs = build_meb(traces, structure.pairs, spec.dt_minutes, DroopConfig(), hours=24)
    inst = build_instance(params, structure, _scenarios(plan_prices, traces), mebs)
    res, sol = solve_instance(inst, options)
    date = format_timestamp(traces[0].start)[:10]
    if res.status is SolveStatus.LIMIT:
        flags.append("limit")
    if sol is None:
        flags.append("no_solution")
        empty = dict.fromkeys(SHARE_KEYS, 0.0)
        empty["idle"] = 100.0
        return DayResult(day, date, res.status.value, res.nodes, None, 0.0, 0.0, 0.0, empty, dict(empty), flags)
    planned = float(sol.objective)
    if forecast is not None:
        real = build_instance(params, structure, _scenarios(actual, traces), mebs)
        r_res, r_sol = solve_instance(_fixed_bids(real, sol), options)
        if r_sol is None and params.firm_spot:
            flags.append("realized_spot_not_firm")
            loose = dataclasses.replace(params, firm_spot=False)
            real = build_instance(loose, structure, _scenarios(actual, traces), mebs)
            r_res, r_sol = solve_instance(_fixed_bids(real, sol), options)
        if r_sol is None:
            raise RuntimeError(f"day {day}: realized dispatch is infeasible with the forecast bids")
        if r_res.status is SolveStatus.LIMIT:
            flags.append("realized_limit")
        inst, sol = real, r_sol
    st = settle(sol, inst)
    share, bids, hours = _shares(sol, inst)
    return DayResult(day, date, res.status.value, res.nodes, planned, st.expected_profit, st.expected_cost,
                     hours, share, bids, flags)


@dataclass
class ExperimentReport:
    spec: dict
    days: list[DayResult]

    @property
    def profit(self) -> float:
        return math.fsum(d.profit for d in self.days)

    @property
    def cost(self) -> float:
        return math.fsum(d.cost for d in self.days)

    @property
    def acceptance_hours(self) -> float:
        return math.fsum(d.acceptance_hours for d in self.days)

    def _mean_shares(self, attr: str) -> dict[str, float]:
        if not self.days:
            return dict.fromkeys(SHARE_KEYS, 0.0)
        return {k: math.fsum(getattr(d, attr)[k] for d in self.days) / len(self.days) for k in SHARE_KEYS}

    @property
    def shares(self) -> dict[str, float]:
        return self._mean_shares("shares")

    @property
    def bid_shares(self) -> dict[str, float]:
        return self._mean_shares("bid_shares")

    @property
    def flags(self) -> list[str]:
        return sorted({f for d in self.days for f in d.flags})

    @property
    def partial(self) -> bool:
        return any(f in ("limit", "no_solution", "realized_limit") for d in self.days for f in d.flags)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "profit": self.profit,
            "cost": self.cost,
            "acceptance_hours": self.acceptance_hours,
            "shares": self.shares,
            "bid_shares": self.bid_shares,
            "partial": self.partial,
            "flags": self.flags,
            "days": [d.to_dict() for d in self.days],
        }

    def write(self, out_dir: str | Path) -> list[Path]:
        """Report JSON and a tidy per-day CSV for plotting."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.spec.get("name", "run")
        js = out / f"report_{stem}.json"
        js.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        plot = out / f"plot_{stem}.csv"
        with plot.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "date", "quantity", "value"])
            for d in self.days:
                rows = [("profit", d.profit), ("cost", d.cost), ("acceptance_hours", d.acceptance_hours)]
                rows += [(f"share_{k}", d.shares[k]) for k in SHARE_KEYS]
                for q, v in rows:
                    w.writerow([stem, d.date, q, repr(float(v))])
        return [js, plot]


def run_experiment(spec: ExperimentSpec, data: ExperimentData | None = None) -> ExperimentReport:
    """Solve every evaluated day of ``spec`` and aggregate profits, hours and shares."""
    data = make_data(spec) if data is None else data
    days = spec.day_indices()
    for d in days:
        if d not in data.traces or len(data.traces[d]) != spec.n_scenarios:
            raise DataError(f"day {d}: need {spec.n_scenarios} frequency traces")
    forecasts = {}
    if spec.source == "gam":
        for w in sorted({d // 7 for d in days}):
            forecasts[w] = gam_price_forecast(data, w, spec.history_weeks * HOURS_PER_WEEK)
    jobs = []
    for d in days:
        fc = None
        if spec.source == "gam":
            off = 24 * (d % 7)
            fc = {k: v[off:off + 24] for k, v in forecasts[d // 7].items()}
        jobs.append((spec, d, data.day_prices(d), fc, data.traces[d]))
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            results = list(ex.map(_run_day, jobs))  # map keeps day order
    else:
        results = [_run_day(j) for j in jobs]
    return ExperimentReport(spec.to_dict(), results)


def _pct(a: float, b: float) -> float | None:
    if b == 0:
        return 0.0 if a == 0 else None
    return (a - b) / abs(b) * 100.0


def compare(a: ExperimentReport, b: ExperimentReport) -> dict:
    """Percentage and absolute deltas of ``a`` relative to ``b``."""
    if [d.date for d in a.days] != [d.date for d in b.days]:
        raise ValueError("reports cover different horizons")
    out = {"a": a.spec.get("name"), "b": b.spec.get("name")}
    for q in ("profit", "cost", "acceptance_hours"):
        va, vb = getattr(a, q), getattr(b, q)
        out[q] = {"a": va, "b": vb, "delta": va - vb, "delta_pct": _pct(va, vb)}
    return out
