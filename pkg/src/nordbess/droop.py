"""Droop activation laws and per-step market energy blocks (MEBs).

An MEB is the charge or discharge energy a bid would have to deliver in one
time step of one scenario. FCR-N follows a symmetric linear droop, FCR-D
(upward only) a linear ramp below its start frequency, and spot bids deliver
their hourly energy uniformly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .market_data import FrequencyTrace

__all__ = [
    "MarketId",
    "Side",
    "MarketPower",
    "DroopConfig",
    "MebTable",
    "fcr_n_activation",
    "fcr_d_activation",
    "build_meb",
]


class Side(str, Enum):
    BELOW = "below"  # accepted only if bid price <= clearing price
    ABOVE = "above"  # accepted only if bid price >= clearing price


class MarketId(str, Enum):
    N = "N"
    D = "D"
    S_DCH = "S_DCH"
    S_CH = "S_CH"

    @property
    def is_freq(self) -> bool:
        return self in (MarketId.N, MarketId.D)

    @property
    def is_spot(self) -> bool:
        return not self.is_freq

    @property
    def side(self) -> Side:
        return Side.ABOVE if self is MarketId.S_CH else Side.BELOW


class MarketPower(NamedTuple):
    market: MarketId
    power: float  # MW for frequency markets, MWh per hour for spot

    @property
    def label(self) -> str:
        return f"{self.market.value}@{self.power:g}"


@dataclass(frozen=True)
class DroopConfig:
    nominal_hz: float = 50.0
    fcr_n_deadband_hz: float = 0.0
    fcr_n_full_dev_hz: float = 0.1
    fcr_d_start_hz: float = 49.9
    fcr_d_full_hz: float = 49.5

    def __post_init__(self):
        if not 0 <= self.fcr_n_deadband_hz < self.fcr_n_full_dev_hz:
            raise ValueError("need 0 <= deadband < full-activation deviation")
        if not self.fcr_d_start_hz > self.fcr_d_full_hz:
            raise ValueError("FCR-D start frequency must exceed the full-activation frequency")


def fcr_n_activation(f, cfg: DroopConfig = DroopConfig()):
    """Signed FCR-N activation in [-1, 1]; positive means discharge (under-frequency)."""
    dev = cfg.nominal_hz - np.asarray(f, dtype=float)
    mag = (np.abs(dev) - cfg.fcr_n_deadband_hz) / (cfg.fcr_n_full_dev_hz - cfg.fcr_n_deadband_hz)
    a = np.sign(dev) * np.clip(mag, 0.0, 1.0)
    return float(a) if a.ndim == 0 else a


def fcr_d_activation(f, cfg: DroopConfig = DroopConfig()):
    """Upward FCR-D activation in [0, 1]: 0 at/above start, 1 at/below full."""
    a = np.clip((cfg.fcr_d_start_hz - np.asarray(f, dtype=float)) / (cfg.fcr_d_start_hz - cfg.fcr_d_full_hz), 0.0, 1.0)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class MebTable:
    """Energy blocks indexed ``[scenario, step, pair]`` in MWh."""

    pairs: tuple[MarketPower, ...]
    dt_minutes: int
    e_dch: np.ndarray = field(repr=False)
    e_ch: np.ndarray = field(repr=False)

    @property
    def n_scenarios(self) -> int:
        return self.e_dch.shape[0]

    @property
    def n_steps(self) -> int:
        return self.e_dch.shape[1]

    @property
    def steps_per_hour(self) -> int:
        return 60 // self.dt_minutes

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "t", "market", "power", "e_dch_mwh", "e_ch_mwh"])
            for s in range(self.n_scenarios):
                for t in range(self.n_steps):
                    for k, pair in enumerate(self.pairs):
                        w.writerow([s, t, pair.market.value, repr(float(pair.power)),
                                    repr(float(self.e_dch[s, t, k])), repr(float(self.e_ch[s, t, k]))])


def _step_mean(minute_values: np.ndarray, dt: int) -> np.ndarray:
    return minute_values.reshape(-1, dt).mean(axis=1)


def build_meb(traces: FrequencyTrace | Sequence[FrequencyTrace | None], pairs: Sequence[MarketPower],
              dt_minutes: int = 1, cfg: DroopConfig = DroopConfig(), hours: int | None = None) -> MebTable:
    """Market energy blocks for each scenario trace and market-power pair.

    With ``dt_minutes > 1`` the frequency products use the mean activation of
    the minutes inside each step (FCR-N is netted, so one step never carries
    both charge and discharge).
    A scenario without a trace is treated as a flat nominal-frequency trace
    of ``hours`` length.
    """
    if dt_minutes <= 0 or 60 % dt_minutes:
        raise ValueError(f"dt_minutes={dt_minutes} must divide 60")
    if isinstance(traces, FrequencyTrace) or traces is None:
        traces = [traces]
    pairs = tuple(MarketPower(MarketId(p.market), float(p.power)) for p in pairs)
    if not pairs:
        raise ValueError("at least one market-power pair is required")
    if any(p.power <= 0 for p in pairs):
        raise ValueError("pair power levels must be strictly positive")
    lengths = {tr.hours for tr in traces if tr is not None}
    if hours is None:
        if len(lengths) != 1:
            raise ValueError("cannot infer horizon: pass hours or traces of equal length")
        hours = lengths.pop()
    n_steps = hours * 60 // dt_minutes
    frac = dt_minutes / 60.0
    S = len(traces)
    e_dch = np.zeros((S, n_steps, len(pairs)))
    e_ch = np.zeros_like(e_dch)
    for s, tr in enumerate(traces):
        if tr is None:
            f = np.full(hours * 60, cfg.nominal_hz)
        else:
            if tr.hours < hours:
                raise ValueError(f"trace for scenario {s} covers {tr.hours} h, need {hours}")
            f = np.asarray(tr.values[: hours * 60])
        a_n = fcr_n_activation(f, cfg)
        a_d = fcr_d_activation(f, cfg)
        a_step = _step_mean(a_n, dt_minutes)  # net within a step keeps each entry one-sided
        n_up = np.maximum(a_step, 0.0)
        n_dn = np.maximum(-a_step, 0.0)
        d_up = _step_mean(a_d, dt_minutes)
        for k, (m, p) in enumerate(pairs):
            if m is MarketId.N:
                e_dch[s, :, k] = n_up * p * frac
                e_ch[s, :, k] = n_dn * p * frac
            elif m is MarketId.D:
                e_dch[s, :, k] = d_up * p * frac
            elif m is MarketId.S_DCH:
                e_dch[s, :, k] = p / (60 // dt_minutes)
            else:
                e_ch[s, :, k] = p / (60 // dt_minutes)
    e_dch.setflags(write=False)
    e_ch.setflags(write=False)
    return MebTable(pairs, dt_minutes, e_dch, e_ch)
