from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nordbess.droop import (
    DroopConfig,
    MarketId,
    MarketPower,
    Side,
    build_meb,
    fcr_d_activation,
    fcr_n_activation,
)
from nordbess.market_data import FrequencyTrace

T0 = datetime(2021, 3, 1, tzinfo=timezone.utc)
ALL_PAIRS = [MarketPower(MarketId.N, 0.9), MarketPower(MarketId.D, 0.6),
             MarketPower(MarketId.S_DCH, 0.8), MarketPower(MarketId.S_CH, 0.4)]


def trace(values):
    return FrequencyTrace(T0, np.asarray(values, dtype=float))


@pytest.mark.parametrize("f, expected", [(50.0, 0.0), (49.9, 1.0), (50.05, -0.5), (50.2, -1.0), (49.0, 1.0)])
def test_fcr_n_examples(f, expected):
    assert fcr_n_activation(f) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("f, expected", [(50.0, 0.0), (49.9, 0.0), (49.5, 1.0), (49.7, 0.5), (49.2, 1.0)])
def test_fcr_d_examples(f, expected):
    assert fcr_d_activation(f) == pytest.approx(expected, abs=1e-12)


def test_deadband():
    cfg = DroopConfig(fcr_n_deadband_hz=0.02)
    assert fcr_n_activation(49.99, cfg) == 0.0
    assert fcr_n_activation(49.94, cfg) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("kw", [dict(fcr_n_deadband_hz=0.1), dict(fcr_n_deadband_hz=-0.01),
                                dict(fcr_d_start_hz=49.5, fcr_d_full_hz=49.9)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DroopConfig(**kw)


def test_market_sides():
    assert MarketId.S_CH.side is Side.ABOVE
    assert all(m.side is Side.BELOW for m in (MarketId.N, MarketId.D, MarketId.S_DCH))


def test_flat_trace_zero_frequency_mebs():
    meb = build_meb(trace(np.full(120, 50.0)), [MarketPower(MarketId.N, 0.9), MarketPower(MarketId.D, 0.9)])
    assert not meb.e_dch.any() and not meb.e_ch.any()


def test_saturated_n_hour():
    meb = build_meb(trace(np.full(60, 49.9)), [MarketPower(MarketId.N, 0.6)], dt_minutes=1)
    np.testing.assert_allclose(meb.e_dch[0, :, 0], 0.01, rtol=1e-12)
    assert meb.e_dch[0, :, 0].sum() == pytest.approx(0.6, rel=1e-12)
    assert not meb.e_ch.any()


def test_spot_uniform_split():
    meb = build_meb(trace(np.full(60, 50.0)), [MarketPower(MarketId.S_DCH, 0.8)], dt_minutes=15)
    assert meb.n_steps == 4
    np.testing.assert_allclose(meb.e_dch[0, :, 0], 0.2, rtol=1e-15)


def test_missing_trace_is_nominal():
    meb = build_meb([None, trace(np.full(120, 49.8))], ALL_PAIRS, dt_minutes=15, hours=2)
    assert meb.n_scenarios == 2
    assert not meb.e_dch[0, :, :2].any()
    assert meb.e_dch[1, :, 0].sum() == pytest.approx(2 * 0.9)


@pytest.mark.parametrize("dt", [0, 7, 90])
def test_bad_dt(dt):
    with pytest.raises(ValueError):
        build_meb(trace(np.full(60, 50.0)), ALL_PAIRS, dt_minutes=dt)


def test_empty_pairs():
    with pytest.raises(ValueError):
        build_meb(trace(np.full(60, 50.0)), [])


def test_write_csv(tmp_path):
    meb = build_meb(trace(np.full(60, 49.95)), ALL_PAIRS[:1], dt_minutes=30)
    meb.write_csv(tmp_path / "m.csv")
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "s,t,market,power,e_dch_mwh,e_ch_mwh"
    assert len(rows) == 3


freqs = st.floats(49.0, 51.0, allow_nan=False)


@settings(max_examples=200)
@given(arrays(float, 50, elements=freqs), st.floats(0.01, 5.0))
def test_activation_ranges(f, _p):
    n = fcr_n_activation(f)
    d = fcr_d_activation(f)
    assert np.all(np.abs(n) <= 1.0) and np.all((d >= 0) & (d <= 1))
    # saturation
    assert np.all(n[f <= 49.9] == 1.0) and np.all(n[f >= 50.1] == -1.0)
    assert np.all(d[f <= 49.5] == 1.0) and np.all(d[f >= 49.9] == 0.0)


hour_trace = arrays(float, 60, elements=freqs)


@settings(max_examples=50, deadline=None)
@given(hour_trace, st.floats(0.05, 2.0), st.sampled_from([1, 5, 15, 60]))
def test_meb_power_bound_and_linearity(f, p, dt):
    pairs = [MarketPower(m, p) for m in MarketId]
    doubled = [MarketPower(m, 2 * p) for m in MarketId]
    a = build_meb(trace(f), pairs, dt_minutes=dt)
    b = build_meb(trace(f), doubled, dt_minutes=dt)
    cap = p * dt / 60 + 1e-12
    assert np.all(a.e_dch <= cap) and np.all(a.e_ch <= cap)
    assert np.all(a.e_dch >= 0) and np.all(a.e_ch >= 0)
    assert not np.any((a.e_dch > 0) & (a.e_ch > 0))
    np.testing.assert_allclose(b.e_dch, 2 * a.e_dch, rtol=1e-12, atol=0)
    np.testing.assert_allclose(b.e_ch, 2 * a.e_ch, rtol=1e-12, atol=0)
    # spot conservation
    assert a.e_dch[0, :, 2].sum() == pytest.approx(p, rel=1e-12)
    assert a.e_ch[0, :, 3].sum() == pytest.approx(p, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(hour_trace, arrays(float, 60, elements=st.floats(0, 0.5)))
def test_meb_monotone_in_frequency(f, drop):
    lower = np.clip(f - drop, 49.0, 51.0)
    pair = [MarketPower(MarketId.N, 1.0), MarketPower(MarketId.D, 1.0)]
    hi = build_meb(trace(f), pair)
    lo = build_meb(trace(lower), pair)
    assert np.all(lo.e_dch >= hi.e_dch - 1e-15)
    assert np.all(lo.e_ch <= hi.e_ch + 1e-15)
