"""Exhaustive reference solver for tiny scheduling instances.

Works from the instance data only (never from the assembled matrix). Per
hour it enumerates "no bid" and every (pair, candidate price) option. The
candidate prices are the scenario clearing prices, the prices shifted by
the acceptance tolerance, the midpoints between neighbouring candidates and
the bid bounds. At a given price each scenario is rejected, accepted or (on
a tolerance boundary) free. Each resulting acceptance pattern is kept with
its best availability payment. For each scenario the remaining flow problem
then depends only on the accepted pair per hour. It is solved by trying FCR-N
"fulfilled" hour sets in decreasing payment order and checking SOC
feasibility with a small LP.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .droop import MarketId, Side
from .scheduling import MilpInstance, SocMode

__all__ = ["OracleCapExceeded", "OracleResult", "brute_force_oracle"]


class OracleCapExceeded(RuntimeError):
    pass


@dataclass
class OracleResult:
    objective: float
    bids: list  # per hour: None or (pair index, price)
    acceptance: list  # per hour: tuple of bools per scenario
    ok_hours: list  # per scenario: fulfilled FCR-N hours
    combinations: int = 0
    soc_paths: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class _Option:
    pair: int | None
    price: float
    accepted: tuple[bool, ...]
    availability: float  # probability-weighted


def _candidate_prices(vals, eps, lo, hi) -> list[float]:
    base = set()
    for v in vals:
        base.update((v, v - eps, v + eps))
    base.update((lo, hi))
    pts = sorted(min(max(q, lo), hi) for q in base)
    mids = [(a + b) / 2 for a, b in zip(pts, pts[1:]) if b > a]
    return sorted(set(pts) | set(mids))


def _status(side: Side, q: float, clearing: float, eps: float) -> int:
    """-1 rejected, 1 accepted, 0 free."""
    if side is Side.BELOW:
        if clearing < q:
            return -1
        return 1 if clearing > q + eps else 0
    if q < clearing:
        return -1
    return 1 if q > clearing + eps else 0


def _hour_options(inst: MilpInstance, h: int) -> list[_Option]:
    st = inst.structure
    S = len(inst.scenarios)
    probs = [sc.probability for sc in inst.scenarios]
    best: dict[tuple, _Option] = {}
    none = _Option(None, st.bid_min, (False,) * S, 0.0)
    best[(None, none.accepted)] = none
    for k, pair in enumerate(st.pairs):
        clearing = [sc.clearing_prices[pair.market][h] for sc in inst.scenarios]
        for q in _candidate_prices(clearing, st.eps, st.bid_min, inst.bid_max):
            status = [_status(pair.market.side, q, c, st.eps) for c in clearing]
            choices = [(False, True) if v == 0 else ((v == 1),) for v in status]
            for acc in itertools.product(*choices):
                pay = sum(probs[s] * pair.power * q for s in range(S) if acc[s]) if pair.market.is_freq else 0.0
                key = (k, acc)
                if key not in best or pay > best[key].availability:
                    best[key] = _Option(k, q, acc, pay)
    return list(best.values())


class _Residual:
    """Best spot plus energy value of one scenario for a fixed accepted-pair sequence."""

    def __init__(self, inst: MilpInstance, s: int):
        self.inst = inst
        self.s = s
        self.sc = inst.scenarios[s]
        self.e_d = np.asarray(inst.mebs.e_dch[s])
        self.e_c = np.asarray(inst.mebs.e_ch[s])
        self.cache: dict[tuple, tuple[float, tuple, np.ndarray] | None] = {}

    def _feasible(self, seq, ok: set[int]):
        prm = self.inst.params
        pairs = self.inst.structure.pairs
        sph = prm.steps_per_hour
        T = prm.n_steps
        lo = np.zeros(2 * T)
        hi = np.zeros(2 * T)
        for t in range(T):
            h = t // sph
            k = seq[h]
            if k is None:
                continue
            ed, ec = self.e_d[t, k], self.e_c[t, k]
            hi[t], hi[T + t] = ed, ec
            if h in ok or (prm.firm_spot and pairs[k].market.is_spot):
                lo[t], lo[T + t] = ed, ec
        a = 1.0 / (1.0 - prm.ilf)
        b = 1.0 - prm.ilf
        # soc after step t: soc_start - sum_{u<=t} (a zd_u - b zc_u)
        L = np.tril(np.ones((T, T)))
        D = np.hstack([a * L, -b * L])
        A_ub = np.vstack([D, -D])
        b_ub = np.concatenate([np.full(T, prm.soc_start - prm.e_min), np.full(T, prm.e_max - prm.soc_start)])
        A_eq = b_eq = None
        if prm.soc_mode is SocMode.FIXED:
            A_eq = D[-1:].copy()
            b_eq = np.array([prm.soc_start - prm.soc_end])
        res = linprog(np.zeros(2 * T), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=list(zip(lo, hi)), method="highs")
        if res.status != 0:
            return None
        return prm.soc_start - D @ res.x

    def value(self, seq: tuple) -> tuple[float, tuple, np.ndarray] | None:
        if seq in self.cache:
            return self.cache[seq]
        prm = self.inst.params
        sph = prm.steps_per_hour
        pairs = self.inst.structure.pairs
        spot = 0.0
        energy = {}
        for h, k in enumerate(seq):
            if k is None:
                continue
            m = pairs[k].market
            price = self.sc.clearing_prices[m][h]
            if m is MarketId.S_DCH:
                spot += pairs[k].power * price
            elif m is MarketId.S_CH:
                spot -= pairs[k].power * price
            elif m is MarketId.N:
                st = slice(h * sph, (h + 1) * sph)
                e = self.sc.c_up[h] * self.e_d[st, k].sum() + self.sc.c_down[h] * self.e_c[st, k].sum()
                if e > 0:
                    energy[h] = e
        hours = sorted(energy)
        subsets = []
        for r in range(len(hours) + 1):
            subsets += [set(c) for c in itertools.combinations(hours, r)]
        subsets.sort(key=lambda c: -sum(energy[h] for h in c))
        out = None
        for ok in subsets:
            path = self._feasible(seq, ok)
            if path is not None:
                out = (spot + sum(energy[h] for h in ok), tuple(sorted(ok)), path)
                break
        self.cache[seq] = out
        return out


def brute_force_oracle(inst: MilpInstance, cap: int = 1_000_000) -> OracleResult:
    """Optimal objective of ``inst`` by enumeration; raises if the search exceeds ``cap``."""
    H = inst.n_hours
    S = len(inst.scenarios)
    options = [_hour_options(inst, h) for h in range(H)]
    total = math.prod(len(o) for o in options)
    if total > cap:
        raise OracleCapExceeded(f"{total} bid assignments exceed the cap of {cap}")
    resid = [_Residual(inst, s) for s in range(S)]
    probs = [sc.probability for sc in inst.scenarios]
    best_val, best = -math.inf, None
    for combo in itertools.product(*options):
        val = sum(o.availability for o in combo)
        parts = []
        feasible = True
        for s in range(S):
            seq = tuple(o.pair if o.accepted[s] else None for o in combo)
            r = resid[s].value(seq)
            if r is None:
                feasible = False
                break
            val += probs[s] * r[0]
            parts.append(r)
        if feasible and val > best_val + 1e-12:
            best_val, best = val, (combo, parts)
    if best is None:
        return OracleResult(math.nan, [], [], [], total)
    combo, parts = best
    return OracleResult(
        float(best_val),
        [None if o.pair is None else (o.pair, o.price) for o in combo],
        [o.accepted for o in combo],
        [p[1] for p in parts],
        total,
        [p[2] for p in parts],
    )
