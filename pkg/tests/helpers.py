"""Instance builders shared by the test modules."""
from datetime import datetime, timezone

import numpy as np

from nordbess.droop import MarketId, MarketPower, build_meb
from nordbess.market_data import FrequencyTrace
from nordbess.scheduling import BessParams, BidStructure, Scenario, build_instance

T0 = datetime(2021, 3, 1, tzinfo=timezone.utc)


def flat_trace(hours, hz=50.0):
    return FrequencyTrace(T0, np.full(60 * hours, hz))


def make_instance(pairs, prices, hours=1, dt=15, hz=50.0, c_up=0.0, c_down=0.0, bid_max=None, **params):
    """One-scenario instance; ``prices`` maps market to a scalar or per-hour list."""
    pairs = [MarketPower(MarketId(m), p) for m, p in pairs]
    full = {m: np.broadcast_to(np.asarray(prices.get(m.value, 0.0), dtype=float), (hours,)).copy() for m in MarketId}
    trace = flat_trace(hours, hz) if np.isscalar(hz) else FrequencyTrace(T0, np.asarray(hz, dtype=float))
    sc = Scenario(1.0, full, np.full(hours, c_up), np.full(hours, c_down), trace)
    bp = BessParams(dt_minutes=dt, horizon_hours=hours, **params)
    structure = BidStructure(tuple(pairs), bid_max=bid_max)
    return build_instance(bp, structure, [sc], build_meb([trace], pairs, dt))

