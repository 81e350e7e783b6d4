"""Stochastic day-ahead bidding model for a battery in reserve and spot markets.

One bid (market, power level, price) may be placed per hour. Whether it is
accepted is scenario-dependent and follows from the bid price and the
scenario clearing price. Accepted bids imply per-step energy blocks which
the battery either delivers or leaves as slack; slack in an hour forfeits
that hour's FCR-N energy payment.

The bid price variable is shared by whichever pair is bid in an hour.
Frequency markets pay as bid, spot legs pay (or cost) as clear.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .droop import MarketId, MarketPower, MebTable, Side
from .market_data import DataError, FrequencyTrace, load_frequency_csv
from .milp.bnb import branch_and_bound
from .milp.lp import LinearProgram, SolveOptions, SolveResult, SolveStatus

__all__ = [
    "SocMode",
    "BessParams",
    "Scenario",
    "BidStructure",
    "BigM",
    "MilpInstance",
    "Solution",
    "Violation",
    "ValidationReport",
    "Settlement",
    "compute_big_m",
    "build_instance",
    "validate_solution",
    "settle",
    "solve_instance",
    "load_scenarios",
    "save_scenarios",
    "write_solution",
    "FREQ_LEVELS",
    "SPOT_LEVELS",
]

FREQ_LEVELS = (0.9, 0.6, 0.3)  # MW
SPOT_LEVELS = (0.8, 0.6, 0.4)  # MWh per hour
DEFAULT_EPS = 1e-3
BID_MAX_FACTOR = 1.5


class SocMode(str, Enum):
    FIXED = "fixed"  # start and end of day pinned
    FLEXIBLE = "flexible"  # end of day only bounded


@dataclass(frozen=True)
class BessParams:
    e_min: float = 0.0
    e_max: float = 1.0
    soc_start: float = 0.5
    soc_end: float = 0.5
    ilf: float = 0.10
    dt_minutes: int = 1
    horizon_hours: int = 24
    soc_mode: SocMode = SocMode.FIXED
    firm_spot: bool = False  # accepted spot blocks must be delivered in full

    def __post_init__(self):
        object.__setattr__(self, "soc_mode", SocMode(self.soc_mode))
        if not 0 <= self.e_min < self.soc_start < self.e_max:
            raise ValueError("need 0 <= e_min < soc_start < e_max")
        if not self.e_min <= self.soc_end <= self.e_max:
            raise ValueError("soc_end outside [e_min, e_max]")
        if not 0 <= self.ilf < 1:
            raise ValueError("ilf must lie in [0, 1)")
        if self.dt_minutes <= 0 or 60 % self.dt_minutes:
            raise ValueError("dt_minutes must divide 60")
        if self.horizon_hours <= 0:
            raise ValueError("horizon_hours must be positive")

    @property
    def steps_per_hour(self) -> int:
        return 60 // self.dt_minutes

    @property
    def n_steps(self) -> int:
        return self.horizon_hours * self.steps_per_hour


@dataclass
class Scenario:
    """One price/frequency outcome. Prices are per hour; ``c_up``/``c_down`` per MWh."""

    probability: float
    clearing_prices: dict[MarketId, np.ndarray]
    c_up: np.ndarray | None = None
    c_down: np.ndarray | None = None
    frequency_trace: FrequencyTrace | None = field(default=None, repr=False)
    trace_path: str | None = None

    def __post_init__(self):
        self.clearing_prices = {MarketId(m): np.asarray(v, dtype=float) for m, v in self.clearing_prices.items()}
        lengths = {len(v) for v in self.clearing_prices.values()}
        if len(lengths) > 1:
            raise ValueError("clearing price series differ in length")
        n = lengths.pop() if lengths else 0
        self.c_up = np.zeros(n) if self.c_up is None else np.asarray(self.c_up, dtype=float)
        self.c_down = np.zeros(n) if self.c_down is None else np.asarray(self.c_down, dtype=float)
        if not 0 <= self.probability <= 1:
            raise ValueError(f"probability {self.probability} outside [0, 1]")
        for name, arr in [(m.value, v) for m, v in self.clearing_prices.items()] + [("c_up", self.c_up), ("c_down", self.c_down)]:
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} prices must be finite and >= 0")
        if len(self.c_up) != n or len(self.c_down) != n:
            raise ValueError("c_up/c_down length differs from clearing prices")

    @property
    def hours(self) -> int:
        return len(self.c_up)

    def price(self, market: MarketId, h: int) -> float:
        try:
            return float(self.clearing_prices[market][h])
        except KeyError:
            raise ValueError(f"scenario has no clearing prices for market {market.value}") from None


def check_probabilities(scenarios: Sequence[Scenario]) -> None:
    if not scenarios:
        raise ValueError("at least one scenario is required")
    total = math.fsum(s.probability for s in scenarios)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"scenario probabilities sum to {total!r}, not 1")


@dataclass(frozen=True)
class BidStructure:
    pairs: tuple[MarketPower, ...]
    bid_min: float = 0.0
    bid_max: float | None = None  # None: BID_MAX_FACTOR x the largest clearing price
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        pairs = tuple(MarketPower(MarketId(m), float(p)) for m, p in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise ValueError("the market-power pair set is empty")
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate market-power pairs")
        if any(p.power <= 0 for p in pairs):
            raise ValueError("power levels must be strictly positive")
        if self.bid_max is not None and not self.bid_min < self.bid_max:
            raise ValueError("bid_min must be below bid_max")
        if self.bid_min < 0 or self.eps <= 0:
            raise ValueError("bid_min must be >= 0 and eps > 0")

    @classmethod
    def single(cls, freq_level: float = FREQ_LEVELS[0], spot_level: float = SPOT_LEVELS[0],
               markets: Sequence[MarketId] = tuple(MarketId), **kw) -> "BidStructure":
        return cls(tuple(MarketPower(MarketId(m), freq_level if MarketId(m).is_freq else spot_level) for m in markets), **kw)

    @classmethod
    def multi(cls, freq_levels=FREQ_LEVELS, spot_levels=SPOT_LEVELS,
              markets: Sequence[MarketId] = tuple(MarketId), **kw) -> "BidStructure":
        pairs = []
        for m in map(MarketId, markets):
            pairs += [MarketPower(m, p) for p in (freq_levels if m.is_freq else spot_levels)]
        return cls(tuple(pairs), **kw)

    def resolved_bid_max(self, scenarios: Sequence[Scenario]) -> float:
        if self.bid_max is not None:
            return float(self.bid_max)
        top = max((float(np.max(s.clearing_prices[p.market], initial=0.0)) for s in scenarios for p in self.pairs
                   if p.market in s.clearing_prices), default=0.0)
        return max(self.bid_min, BID_MAX_FACTOR * top)


@dataclass(frozen=True)
class BigM:
    acceptance: float
    availability: float
    slack: float
    energy: float


def _hourly_energy_cap(mebs: MebTable) -> np.ndarray:
    """``[s, h]``: summed per-step maximum over pairs of discharge plus charge energy."""
    per_step = np.max(mebs.e_dch + mebs.e_ch, axis=2)
    S, T = per_step.shape
    return per_step.reshape(S, T // mebs.steps_per_hour, mebs.steps_per_hour).sum(axis=2)


def compute_big_m(structure: BidStructure, scenarios: Sequence[Scenario], params: BessParams | None = None,
                  mebs: MebTable | None = None) -> BigM:
    """Family-wide big-M constants.

    Without ``mebs`` the slack bound falls back to the largest power level,
    which bounds any one hour of droop or spot energy.
    """
    bid_max = structure.resolved_bid_max(scenarios)
    prices, cs = [0.0], [0.0]
    for s in scenarios:
        for p in structure.pairs:
            arr = s.clearing_prices.get(p.market)
            if arr is not None:
                prices.append(float(np.max(arr, initial=0.0)))
        cs += [float(np.max(s.c_up, initial=0.0)), float(np.max(s.c_down, initial=0.0))]
    vals = prices + cs + [bid_max, structure.bid_min]
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("big-M needs finite price bounds")
    acc = max(prices) + bid_max + structure.eps
    freq_p = [p.power for p in structure.pairs if p.market.is_freq]
    avail = max(freq_p, default=0.0) * bid_max
    if mebs is not None:
        slack = float(np.max(_hourly_energy_cap(mebs), initial=0.0))
    else:
        slack = max(p.power for p in structure.pairs)
    return BigM(acc, avail, slack, max(cs) * slack)


class _Vars:
    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []

    def add(self, name: str, shape: tuple[int, ...], lb=0.0, ub=math.inf, integer=False) -> np.ndarray:
        start = len(self.names)
        n = int(np.prod(shape)) if shape else 1
        idx = np.arange(start, start + n).reshape(shape)
        lbv = np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel()
        ubv = np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel()
        for flat, tup in enumerate(np.ndindex(*shape)):
            self.names.append(name + "".join(f"_{i}" for i in tup))
        self.lb += lbv.tolist()
        self.ub += ubv.tolist()
        self.integer += [integer] * n
        return idx


class _Rows:
    def __init__(self):
        self.ri: list[int] = []
        self.ci: list[int] = []
        self.vals: list[float] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.names: list[str] = []

    def add(self, name: str, terms: Sequence[tuple[int, float]], sense: str, rhs: float) -> None:
        i = len(self.rhs)
        for j, v in terms:
            if v != 0.0:
                self.ri.append(i)
                self.ci.append(int(j))
                self.vals.append(float(v))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.names.append(name)


@dataclass(frozen=True, eq=False)
class MilpInstance:
    """A built model together with everything needed to interpret it."""

    lp: LinearProgram = field(repr=False)
    params: BessParams
    structure: BidStructure
    scenarios: tuple[Scenario, ...] = field(repr=False)
    mebs: MebTable = field(repr=False)
    bid_max: float
    big_m: BigM
    index: Mapping[str, np.ndarray] = field(repr=False)
    row_m: Mapping[str, np.ndarray] = field(repr=False)

    @property
    def n_hours(self) -> int:
        return self.params.horizon_hours

    @property
    def n_steps(self) -> int:
        return self.params.n_steps

    @property
    def n_soc_steps(self) -> int:
        """SOC transitions per scenario."""
        return self.n_steps

    @property
    def n_binaries(self) -> dict[str, int]:
        return {k: int(self.index[k].size) for k in ("x_bid", "x_acc", "w_ok")}

    def hour_of(self, t: int) -> int:
        return t // self.params.steps_per_hour

    def price_table(self) -> np.ndarray:
        """``[s, h, k]`` clearing price of each pair's market."""
        S, H, K = len(self.scenarios), self.n_hours, len(self.structure.pairs)
        out = np.zeros((S, H, K))
        for s, sc in enumerate(self.scenarios):
            for k, pair in enumerate(self.structure.pairs):
                out[s, :, k] = sc.clearing_prices[pair.market][:H]
        return out


def build_instance(params: BessParams, structure: BidStructure, scenarios: Sequence[Scenario],
                   mebs: MebTable) -> MilpInstance:
    """Assemble the mixed-integer program for one horizon.

    Rows per hour: at most one bid; per scenario and pair, acceptance only of
    placed bids plus the two-way price/acceptance link; per step the energy
    block balance, the loss-adjusted net energy and the SOC recursion; per
    scenario-hour the slack gate, the availability product linearization, the
    spot payment equalities and the gated FCR-N energy payment.
    """
    scenarios = tuple(scenarios)
    check_probabilities(scenarios)
    pairs = structure.pairs
    H, T, S, K = params.horizon_hours, params.n_steps, len(scenarios), len(pairs)
    if tuple(mebs.pairs) != tuple(pairs):
        raise ValueError("MEB table pairs do not match the bid structure")
    if mebs.dt_minutes != params.dt_minutes:
        raise ValueError(f"MEB step {mebs.dt_minutes} min differs from params step {params.dt_minutes} min")
    if mebs.n_scenarios != S or mebs.n_steps != T:
        raise ValueError(f"MEB table is {mebs.n_scenarios}x{mebs.n_steps}, need {S} scenarios x {T} steps")
    for s, sc in enumerate(scenarios):
        if sc.hours < H:
            raise ValueError(f"scenario {s} covers {sc.hours} h, horizon is {H} h")
        for pair in pairs:
            sc.price(pair.market, 0)
    bid_max = structure.resolved_bid_max(scenarios)
    bid_min = structure.bid_min
    eps = structure.eps
    big = compute_big_m(structure, scenarios, params, mebs)
    P = np.zeros((S, H, K))
    for s, sc in enumerate(scenarios):
        for k, pair in enumerate(pairs):
            P[s, :, k] = sc.clearing_prices[pair.market][:H]
    Edch, Ech = np.asarray(mebs.e_dch), np.asarray(mebs.e_ch)
    sph = params.steps_per_hour
    n_pairs = [k for k, p in enumerate(pairs) if p.market is MarketId.N]
    freq = [k for k, p in enumerate(pairs) if p.market.is_freq]
    # per-pair hourly energy G and its FCR-N energy value F, both [s, h, k]
    G = (Edch + Ech).reshape(S, H, sph, K).sum(axis=2)
    F = np.zeros((S, H, K))
    for s, sc in enumerate(scenarios):
        F[s] = sc.c_up[:H, None] * Edch[s].reshape(H, sph, K).sum(axis=1) + sc.c_down[:H, None] * Ech[s].reshape(H, sph, K).sum(axis=1)
    slack_m = G.max(axis=2)
    e_m = F[:, :, n_pairs].max(axis=2, initial=0.0)  # largest payable energy value
    flow_m = F.max(axis=2)  # largest energy value of any accepted block
    Macc = big.acceptance

    # acceptance impossible -> fixed to zero; certain -> tied to the bid
    acc_ub = np.ones((S, H, K))
    forced = np.zeros((S, H, K), bool)
    for k, pair in enumerate(pairs):
        if pair.market.side is Side.BELOW:
            acc_ub[:, :, k] = P[:, :, k] >= bid_min
            forced[:, :, k] = P[:, :, k] > bid_max + eps
        else:
            acc_ub[:, :, k] = P[:, :, k] <= bid_max
            forced[:, :, k] = P[:, :, k] < bid_min - eps

    V = _Vars()
    ix = {}
    ix["x_bid"] = V.add("xbid", (H, K), 0, 1, True)
    ix["x_price"] = V.add("xprice", (H,), bid_min, bid_max)
    ix["x_acc"] = V.add("xacc", (S, H, K), 0, acc_ub, True)
    ix["w_ok"] = V.add("wok", (S, H), 0, 1, True)
    ix["z_dch"] = V.add("zdch", (S, T), 0, Edch.max(axis=2))
    ix["z_ch"] = V.add("zch", (S, T), 0, Ech.max(axis=2))
    ix["s_dch"] = V.add("sdch", (S, T), 0, Edch.max(axis=2))
    ix["s_ch"] = V.add("sch", (S, T), 0, Ech.max(axis=2))
    ix["z_net"] = V.add("znet", (S, T), -math.inf, math.inf)
    soc_lb = np.full((S, T + 1), params.e_min)
    soc_ub = np.full((S, T + 1), params.e_max)
    soc_lb[:, 0] = soc_ub[:, 0] = params.soc_start
    if params.soc_mode is SocMode.FIXED:
        soc_lb[:, T] = soc_ub[:, T] = params.soc_end
    ix["soc"] = V.add("soc", (S, T + 1), soc_lb, soc_ub)
    pw = np.array([p.power for p in pairs])
    w_av_ub = np.zeros((S, H, K))
    for k in freq:
        w_av_ub[:, :, k] = pw[k] * np.minimum(P[:, :, k], bid_max)
    ix["w_avail"] = V.add("wavail", (S, H, K), 0, w_av_ub)
    dch_k = [k for k, p in enumerate(pairs) if p.market is MarketId.S_DCH]
    ch_k = [k for k, p in enumerate(pairs) if p.market is MarketId.S_CH]
    ix["w_spot_dch"] = V.add("wspotdch", (S, H), 0, np.max(P[:, :, dch_k] * pw[dch_k], axis=2, initial=0.0))
    ix["w_spot_ch"] = V.add("wspotch", (S, H), 0, np.max(P[:, :, ch_k] * pw[ch_k], axis=2, initial=0.0))
    ix["w_energy"] = V.add("wenergy", (S, H), 0, e_m if n_pairs else 0.0)

    xb, xp, xa, wok = ix["x_bid"], ix["x_price"], ix["x_acc"], ix["w_ok"]
    zd, zc, sd, scv, zn, soc = ix["z_dch"], ix["z_ch"], ix["s_dch"], ix["s_ch"], ix["z_net"], ix["soc"]
    wav, wsd, wsc, wen = ix["w_avail"], ix["w_spot_dch"], ix["w_spot_ch"], ix["w_energy"]
    R = _Rows()
    for h in range(H):
        R.add(f"one_bid_{h}", [(xb[h, k], 1.0) for k in range(K)], "<", 1.0)
    for s in range(S):
        for h in range(H):
            for k, pair in enumerate(pairs):
                tag = f"{s}_{h}_{k}"
                R.add(f"acc_bid_{tag}", [(xa[s, h, k], 1.0), (xb[h, k], -1.0)], "<", 0.0)
                p_ = P[s, h, k]
                # row-wise M: the smallest value that leaves the row slack in its relaxed state
                if pair.market.side is Side.BELOW:
                    mf, ml = max(0.0, p_ - bid_min - eps), max(0.0, bid_max - p_)
                    R.add(f"acc_force_{tag}", [(xb[h, k], p_), (xp[h], -1.0), (xa[s, h, k], -mf)], "<", eps)
                    R.add(f"acc_link_{tag}", [(xp[h], 1.0), (xa[s, h, k], ml)], "<", p_ + ml)
                else:
                    mf, ml = max(0.0, bid_max - p_ - eps), max(0.0, p_ - bid_min)
                    R.add(f"acc_force_{tag}", [(xp[h], 1.0), (xa[s, h, k], -mf), (xb[h, k], mf)], "<", eps + p_ + mf)
                    R.add(f"acc_link_{tag}", [(xp[h], -1.0), (xa[s, h, k], ml)], "<", ml - p_)
                if forced[s, h, k]:
                    R.add(f"acc_sure_{tag}", [(xa[s, h, k], 1.0), (xb[h, k], -1.0)], ">", 0.0)
    a = 1.0 / (1.0 - params.ilf)
    b = 1.0 - params.ilf
    for s in range(S):
        for t in range(T):
            h = t // sph
            R.add(f"flow_dch_{s}_{t}", [(zd[s, t], 1.0), (sd[s, t], 1.0)] + [(xa[s, h, k], -Edch[s, t, k]) for k in range(K)], "=", 0.0)
            R.add(f"flow_ch_{s}_{t}", [(zc[s, t], 1.0), (scv[s, t], 1.0)] + [(xa[s, h, k], -Ech[s, t, k]) for k in range(K)], "=", 0.0)
            R.add(f"net_{s}_{t}", [(zn[s, t], 1.0), (zd[s, t], -a), (zc[s, t], b)], "=", 0.0)
            R.add(f"soc_rec_{s}_{t}", [(soc[s, t + 1], 1.0), (soc[s, t], -1.0), (zn[s, t], 1.0)], "=", 0.0)
    for s, sc in enumerate(scenarios):
        for h in range(H):
            steps = range(h * sph, (h + 1) * sph)
            M = slack_m[s, h]
            slack_terms = [(sd[s, t], 1.0) for t in steps] + [(scv[s, t], 1.0) for t in steps]
            R.add(f"slack_gate_{s}_{h}", slack_terms + [(wok[s, h], M)], "<", M)
            if params.firm_spot:
                R.add(f"spot_firm_{s}_{h}", slack_terms + [(xa[s, h, k], M) for k in dch_k + ch_k], "<", M)
                # valid cut: only frequency blocks can leave slack, and at most one pair is accepted
                for t in steps:
                    R.add(f"spot_firm_dch_{s}_{t}", [(sd[s, t], 1.0)] + [(xa[s, h, k], -Edch[s, t, k]) for k in freq if Edch[s, t, k]], "<", 0.0)
                    R.add(f"spot_firm_ch_{s}_{t}", [(scv[s, t], 1.0)] + [(xa[s, h, k], -Ech[s, t, k]) for k in freq if Ech[s, t, k]], "<", 0.0)
            for k in freq:
                tag = f"{s}_{h}_{k}"
                m2 = w_av_ub[s, h, k]
                m3 = pw[k] * bid_max
                R.add(f"avail_price_{tag}", [(wav[s, h, k], 1.0), (xp[h], -pw[k])], "<", 0.0)
                R.add(f"avail_acc_{tag}", [(wav[s, h, k], 1.0), (xa[s, h, k], -m2)], "<", 0.0)
                R.add(f"avail_low_{tag}", [(wav[s, h, k], 1.0), (xp[h], -pw[k]), (xa[s, h, k], -m3)], ">", -m3)
                # valid cut: accepted in a cheaper scenario s2 caps the shared price at its clearing price
                for s2 in range(S):
                    d = P[s, h, k] - P[s2, h, k]
                    if s2 != s and d >= 0 and P[s2, h, k] < bid_max:
                        R.add(f"avail_cross_{tag}_{s2}", [(wav[s, h, k], 1.0), (xa[s, h, k], -pw[k] * P[s2, h, k]),
                                                          (xa[s2, h, k], pw[k] * d)], "<", pw[k] * d)
            R.add(f"spot_dch_{s}_{h}", [(wsd[s, h], 1.0)] + [(xa[s, h, k], -pw[k] * P[s, h, k]) for k in dch_k], "=", 0.0)
            R.add(f"spot_ch_{s}_{h}", [(wsc[s, h], 1.0)] + [(xa[s, h, k], -pw[k] * P[s, h, k]) for k in ch_k], "=", 0.0)
            if n_pairs:
                cu, cd = sc.c_up[h], sc.c_down[h]
                flows = [(zd[s, t], -cu) for t in steps] + [(zc[s, t], -cd) for t in steps]
                Me, Mf = e_m[s, h], flow_m[s, h]
                R.add(f"energy_flow_{s}_{h}", [(wen[s, h], 1.0)] + flows, "<", 0.0)
                R.add(f"energy_ok_{s}_{h}", [(wen[s, h], 1.0), (wok[s, h], -Me)], "<", 0.0)
                R.add(f"energy_n_{s}_{h}", [(wen[s, h], 1.0)] + [(xa[s, h, k], -F[s, h, k]) for k in n_pairs], "<", 0.0)
                R.add(f"energy_low_{s}_{h}", [(wen[s, h], 1.0)] + flows + [(wok[s, h], -Mf)] + [(xa[s, h, k], -Mf) for k in n_pairs], ">", -2 * Mf)

    n = len(V.names)
    c = np.zeros(n)
    for s, sc in enumerate(scenarios):
        ps = sc.probability
        for k in freq:
            c[wav[s, :, k]] += ps
        c[wsd[s]] += ps
        c[wsc[s]] -= ps
        c[wen[s]] += ps
    A = sparse.csr_matrix((R.vals, (R.ri, R.ci)), shape=(len(R.rhs), n))
    lp = LinearProgram(A, R.senses, R.rhs, V.lb, V.ub, c, "max", V.integer, V.names, R.names)
    for arr in ix.values():
        arr.setflags(write=False)
    return MilpInstance(lp, params, structure, scenarios, mebs, bid_max, big, ix,
                        {"slack": slack_m, "energy": e_m, "energy_low": flow_m, "avail_acc": w_av_ub})


@dataclass
class Solution:
    x_bid: np.ndarray  # [h, k]
    x_price: np.ndarray  # [h]
    x_acc: np.ndarray  # [s, h, k]
    z_dch: np.ndarray  # [s, t]
    z_ch: np.ndarray
    z_net: np.ndarray
    soc: np.ndarray  # [s, t], t = 0..T
    s_dch: np.ndarray
    s_ch: np.ndarray
    w_ok: np.ndarray  # [s, h]
    w_avail: np.ndarray  # [s, h, k]
    w_spot_dch: np.ndarray
    w_spot_ch: np.ndarray
    w_energy: np.ndarray
    objective: float

    FIELDS = ("x_bid", "x_price", "x_acc", "z_dch", "z_ch", "z_net", "soc", "s_dch", "s_ch",
              "w_ok", "w_avail", "w_spot_dch", "w_spot_ch", "w_energy")

    @classmethod
    def from_vector(cls, inst: MilpInstance, x, objective: float | None = None) -> "Solution":
        x = np.asarray(x, dtype=float)
        vals = {f: x[inst.index[f]].copy() for f in cls.FIELDS}
        obj = inst.lp.objective(x) if objective is None else float(objective)
        return cls(objective=obj, **vals)

    def to_vector(self, inst: MilpInstance) -> np.ndarray:
        x = np.zeros(inst.lp.shape[1])
        for f in self.FIELDS:
            x[inst.index[f]] = getattr(self, f)
        return x

    def copy(self) -> "Solution":
        return Solution(objective=self.objective, **{f: getattr(self, f).copy() for f in self.FIELDS})

    def bid_pairs(self) -> list[int | None]:
        """Index of the bid pair per hour (None for no bid)."""
        out = []
        for row in self.x_bid:
            on = np.flatnonzero(row > 0.5)
            out.append(int(on[0]) if on.size else None)
        return out


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: tuple[int, ...]
    residual: float

    def __str__(self) -> str:
        return f"{self.constraint}{list(self.index)} residual={self.residual:.3g}"


@dataclass
class ValidationReport:
    violations: list[Violation]
    total_slack: float
    objective_recomputed: float
    objective_reported: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_constraint(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.violations:
            out[v.constraint] = out.get(v.constraint, 0) + 1
        return out


def _expected_objective(sol: Solution, inst: MilpInstance) -> float:
    freq = [k for k, p in enumerate(inst.structure.pairs) if p.market.is_freq]
    tot = 0.0
    for s, sc in enumerate(inst.scenarios):
        tot += sc.probability * (sol.w_avail[s][:, freq].sum() + sol.w_spot_dch[s].sum()
                                 - sol.w_spot_ch[s].sum() + sol.w_energy[s].sum())
    return float(tot)


def validate_solution(sol: Solution, inst: MilpInstance, tol: float = 1e-6) -> ValidationReport:
    """Check every model constraint directly from the primal values.

    Residuals are compared with ``tol * max(1, scale)`` where ``scale`` is the
    largest magnitude among the terms of that constraint.
    """
    p, H, S, K, T = inst.params, inst.n_hours, len(inst.scenarios), len(inst.structure.pairs), inst.n_steps
    pairs = inst.structure.pairs
    sph = p.steps_per_hour
    eps, bid_max, bid_min = inst.structure.eps, inst.bid_max, inst.structure.bid_min
    P = inst.price_table()
    E_d, E_c = np.asarray(inst.mebs.e_dch), np.asarray(inst.mebs.e_ch)
    pw = np.array([q.power for q in pairs])
    viol: list[Violation] = []

    def need(cond_resid: float, scale: float, name: str, *idx):
        if cond_resid > tol * max(1.0, abs(scale)):
            viol.append(Violation(name, tuple(int(i) for i in idx), float(cond_resid)))

    shapes = {"x_bid": (H, K), "x_price": (H,), "x_acc": (S, H, K), "w_ok": (S, H), "soc": (S, T + 1)}
    for f, shp in shapes.items():
        if getattr(sol, f).shape != shp:
            raise ValueError(f"{f} has shape {getattr(sol, f).shape}, expected {shp}")
    for f in ("x_bid", "x_acc", "w_ok"):
        arr = getattr(sol, f)
        for idx in zip(*np.nonzero(np.abs(arr - np.round(arr)) > tol)):
            viol.append(Violation(f"{f}_binary", idx, float(abs(arr[idx] - round(arr[idx])))))
        for idx in zip(*np.nonzero((arr < -tol) | (arr > 1 + tol))):
            viol.append(Violation(f"{f}_binary", idx, float(arr[idx])))
    for f in ("x_price", "z_dch", "z_ch", "soc", "s_dch", "s_ch", "w_avail", "w_spot_dch", "w_spot_ch", "w_energy"):
        arr = getattr(sol, f)
        for idx in zip(*np.nonzero(arr < -tol)):
            viol.append(Violation(f"{f}_nonneg", idx, float(-arr[idx])))

    xb, xa, xp = sol.x_bid, sol.x_acc, sol.x_price
    Macc = inst.big_m.acceptance
    for h in range(H):
        need(xb[h].sum() - 1.0, 1.0, "one_bid", h)
        need(bid_min - xp[h], bid_min, "price_bounds", h)
        need(xp[h] - bid_max, bid_max, "price_bounds", h)
        for s in range(S):
            for k, pair in enumerate(pairs):
                need(xa[s, h, k] - xb[h, k], 1.0, "acc_le_bid", s, h, k)
                pr = P[s, h, k]
                if pair.market.side is Side.BELOW:
                    need(pr * xb[h, k] - (xp[h] + eps) - Macc * xa[s, h, k], Macc, "acceptance_below", s, h, k)
                    need(xa[s, h, k] * (xp[h] - pr), Macc, "acceptance_below_link", s, h, k)
                else:
                    need(xp[h] - eps - pr - Macc * xa[s, h, k] - Macc * (1 - xb[h, k]), Macc, "acceptance_above", s, h, k)
                    need(xa[s, h, k] * (pr - xp[h]), Macc, "acceptance_above_link", s, h, k)

    a, b = 1.0 / (1.0 - p.ilf), 1.0 - p.ilf
    for s in range(S):
        need(abs(sol.soc[s, 0] - p.soc_start), 1.0, "soc_boundary", s, 0)
        if p.soc_mode is SocMode.FIXED:
            need(abs(sol.soc[s, T] - p.soc_end), 1.0, "soc_boundary", s, T)
        else:
            need(p.e_min - sol.soc[s, T], p.e_max, "soc_limits", s, T)
            need(sol.soc[s, T] - p.e_max, p.e_max, "soc_limits", s, T)
        for t in range(T):
            h = t // sph
            ed = float(E_d[s, t] @ xa[s, h])
            ec = float(E_c[s, t] @ xa[s, h])
            need(abs(sol.z_dch[s, t] + sol.s_dch[s, t] - ed), ed, "flow_dch", s, t)
            need(abs(sol.z_ch[s, t] + sol.s_ch[s, t] - ec), ec, "flow_ch", s, t)
            need(abs(sol.z_net[s, t] - (a * sol.z_dch[s, t] - b * sol.z_ch[s, t])), a * sol.z_dch[s, t], "net_energy", s, t)
            nxt = sol.soc[s, t] - sol.z_net[s, t]
            need(p.e_min - nxt, p.e_max, "soc_limits", s, t)
            need(nxt - p.e_max, p.e_max, "soc_limits", s, t)
            need(abs(sol.soc[s, t + 1] - nxt), 1.0, "soc_recursion", s, t + 1)

    freq = [k for k, q in enumerate(pairs) if q.market.is_freq]
    n_pairs = [k for k, q in enumerate(pairs) if q.market is MarketId.N]
    tot_slack = float(sol.s_dch.sum() + sol.s_ch.sum())
    for s, sc in enumerate(inst.scenarios):
        for h in range(H):
            st = slice(h * sph, (h + 1) * sph)
            slack = sol.s_dch[s, st].sum() + sol.s_ch[s, st].sum()
            need(slack * sol.w_ok[s, h], 1.0, "slack_gate", s, h)
            if p.firm_spot:
                spot_acc = sum(xa[s, h, k] for k in range(K) if pairs[k].market.is_spot)
                need(slack * spot_acc, 1.0, "spot_firm", s, h)
            for k in freq:
                target = pw[k] * xp[h] * xa[s, h, k]
                w = sol.w_avail[s, h, k]
                need(w - pw[k] * xp[h], pw[k] * bid_max, "avail_le_price", s, h, k)
                need(w * (1 - xa[s, h, k]), pw[k] * bid_max, "avail_le_acc", s, h, k)
                need(abs(w - target), pw[k] * bid_max, "pay_as_bid", s, h, k)
            for k in set(range(K)) - set(freq):
                need(abs(sol.w_avail[s, h, k]), 1.0, "avail_spot_zero", s, h, k)
            sd = sum(pw[k] * P[s, h, k] * xa[s, h, k] for k in range(K) if pairs[k].market is MarketId.S_DCH)
            sc_ = sum(pw[k] * P[s, h, k] * xa[s, h, k] for k in range(K) if pairs[k].market is MarketId.S_CH)
            need(abs(sol.w_spot_dch[s, h] - sd), sd, "spot_dch", s, h)
            need(abs(sol.w_spot_ch[s, h] - sc_), sc_, "spot_ch", s, h)
            flow = float(sc.c_up[h] * sol.z_dch[s, st].sum() + sc.c_down[h] * sol.z_ch[s, st].sum())
            n_acc = float(sum(xa[s, h, k] for k in n_pairs))
            expect = flow * sol.w_ok[s, h] * n_acc
            need(sol.w_energy[s, h] - flow, flow, "energy_le_flow", s, h)
            need(sol.w_energy[s, h] * (1 - sol.w_ok[s, h]), flow, "energy_gate_ok", s, h)
            need(sol.w_energy[s, h] * (1 - n_acc), flow, "energy_gate_fcrn", s, h)
            need(abs(sol.w_energy[s, h] - expect), flow, "energy_payment", s, h)
    obj = _expected_objective(sol, inst)
    need(abs(obj - sol.objective), obj, "objective", 0)
    return ValidationReport(viol, tot_slack, obj, float(sol.objective))


@dataclass
class Settlement:
    """Payments recomputed from the primal solution (currency units)."""

    availability: np.ndarray  # [s, h, k]
    spot_revenue: np.ndarray  # [s, h]
    spot_cost: np.ndarray  # [s, h]
    energy: np.ndarray  # [s, h]
    probabilities: np.ndarray

    def per_scenario(self) -> np.ndarray:
        return self.availability.sum(axis=(1, 2)) + self.spot_revenue.sum(axis=1) - self.spot_cost.sum(axis=1) + self.energy.sum(axis=1)

    @property
    def expected_profit(self) -> float:
        return float(self.probabilities @ self.per_scenario())

    @property
    def expected_cost(self) -> float:
        return float(self.probabilities @ self.spot_cost.sum(axis=1))

    def to_dict(self) -> dict:
        return {
            "expected_profit": self.expected_profit,
            "expected_cost": self.expected_cost,
            "per_scenario": [float(v) for v in self.per_scenario()],
        }


def settle(sol: Solution, inst: MilpInstance) -> Settlement:
    """Pay-as-bid availability, pay-as-clear spot legs and gated FCR-N energy."""
    pairs = inst.structure.pairs
    S, H, K = len(inst.scenarios), inst.n_hours, len(pairs)
    sph = inst.params.steps_per_hour
    P = inst.price_table()
    acc = np.round(sol.x_acc)
    avail = np.zeros((S, H, K))
    rev, cost, energy = np.zeros((S, H)), np.zeros((S, H)), np.zeros((S, H))
    for k, pair in enumerate(pairs):
        if pair.market.is_freq:
            avail[:, :, k] = pair.power * sol.x_price[None, :] * acc[:, :, k]
        elif pair.market is MarketId.S_DCH:
            rev += pair.power * P[:, :, k] * acc[:, :, k]
        else:
            cost += pair.power * P[:, :, k] * acc[:, :, k]
    n_acc = acc[:, :, [k for k, q in enumerate(pairs) if q.market is MarketId.N]].sum(axis=2)
    for s, sc in enumerate(inst.scenarios):
        zd = sol.z_dch[s].reshape(H, sph).sum(axis=1)
        zc = sol.z_ch[s].reshape(H, sph).sum(axis=1)
        energy[s] = (sc.c_up[:H] * zd + sc.c_down[:H] * zc) * (np.round(sol.w_ok[s]) * n_acc[s])
    probs = np.array([sc.probability for sc in inst.scenarios])
    return Settlement(avail, rev, cost, energy, probs)


def solve_instance(inst: MilpInstance, options: SolveOptions = SolveOptions(), log_file=None,
                   warm_start: Solution | None = None) -> tuple[SolveResult, Solution | None]:
    x0 = warm_start.to_vector(inst) if warm_start is not None else None
    res = branch_and_bound(inst.lp, options, log_file, incumbent=x0)
    sol = Solution.from_vector(inst, res.x, res.objective) if res.x is not None else None
    return res, sol


# ---------------------------------------------------------------- file formats

_MARKET_ALIASES = {"SPOT": (MarketId.S_DCH, MarketId.S_CH), "FCR_N": (MarketId.N,), "FCR_D": (MarketId.D,)}


def _scenario_from_dict(d: dict, base: Path, where: str) -> Scenario:
    try:
        prices = {}
        for key, vals in d["clearing_prices"].items():
            key = key.upper()
            for m in _MARKET_ALIASES[key] if key in _MARKET_ALIASES else (MarketId(key),):
                prices[m] = vals
        trace = None
        tpath = d.get("frequency_trace")
        if tpath:
            full = (base / tpath) if not Path(tpath).is_absolute() else Path(tpath)
            if not full.exists():
                raise DataError(f"{where}: frequency trace {full} does not exist")
            trace = load_frequency_csv(full)
        return Scenario(float(d["probability"]), prices, d.get("c_up"), d.get("c_down"), trace, tpath)
    except DataError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{where}: {exc}") from exc


def load_scenarios(path: str | Path) -> list[Scenario]:
    """Read a JSON list of scenarios (a single object is also accepted)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"scenario file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    items = data if isinstance(data, list) else [data]
    out = [_scenario_from_dict(d, path.parent, f"{path} scenario {i}") for i, d in enumerate(items)]
    try:
        check_probabilities(out)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return out


def save_scenarios(scenarios: Sequence[Scenario], path: str | Path) -> None:
    items = []
    for sc in scenarios:
        items.append({
            "probability": sc.probability,
            "clearing_prices": {m.value: [float(v) for v in arr] for m, arr in sc.clearing_prices.items()},
            "c_up": [float(v) for v in sc.c_up],
            "c_down": [float(v) for v in sc.c_down],
            "frequency_trace": sc.trace_path,
        })
    Path(path).write_text(json.dumps(items, indent=2) + "\n")


def _clean(v: float, nd: int = 9) -> float:
    r = round(float(v), nd)
    return 0.0 if r == 0 else r


def solution_to_dict(sol: Solution, inst: MilpInstance) -> dict:
    pairs = inst.structure.pairs
    settle_ = settle(sol, inst)
    bids = []
    for h, k in enumerate(sol.bid_pairs()):
        bids.append(None if k is None else {
            "hour": h, "market": pairs[k].market.value, "power": pairs[k].power, "price": _clean(sol.x_price[h]),
        })
    return {
        "objective": _clean(sol.objective),
        "expected_profit": _clean(settle_.expected_profit),
        "expected_cost": _clean(settle_.expected_cost),
        "bids": bids,
        "acceptance": [[int(round(float(sol.x_acc[s, h].sum()))) for h in range(inst.n_hours)] for s in range(len(inst.scenarios))],
        "payments": {
            "availability": [[_clean(v) for v in sol.w_avail[s].sum(axis=1)] for s in range(len(inst.scenarios))],
            "spot_dch": [[_clean(v) for v in row] for row in sol.w_spot_dch],
            "spot_ch": [[_clean(v) for v in row] for row in sol.w_spot_ch],
            "energy": [[_clean(v) for v in row] for row in sol.w_energy],
        },
        "w_ok": [[int(round(float(v))) for v in row] for row in sol.w_ok],
        "total_slack_mwh": _clean(sol.s_dch.sum() + sol.s_ch.sum()),
    }


def write_solution(sol: Solution, inst: MilpInstance, json_path: str | Path, csv_path: str | Path) -> None:
    Path(json_path).write_text(json.dumps(solution_to_dict(sol, inst), indent=2, sort_keys=True) + "\n")
    with Path(csv_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "t", "soc", "z_dch", "z_ch", "z_net", "s_dch", "s_ch"])
        for s in range(len(inst.scenarios)):
            for t in range(inst.n_steps):
                w.writerow([s, t] + [repr(_clean(v)) for v in (sol.soc[s, t], sol.z_dch[s, t], sol.z_ch[s, t],
                                                                 sol.z_net[s, t], sol.s_dch[s, t], sol.s_ch[s, t])])
