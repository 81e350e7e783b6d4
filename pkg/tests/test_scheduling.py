import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from helpers import flat_trace, make_instance
from nordbess.droop import MarketId, MarketPower, build_meb
from nordbess.milp.lp import SolveOptions, SolveStatus
from nordbess.scheduling import (
    BessParams,
    BidStructure,
    Scenario,
    Solution,
    build_instance,
    compute_big_m,
    load_scenarios,
    save_scenarios,
    settle,
    solve_instance,
    validate_solution,
    write_solution,
)
from nordbess.synthetic import random_tiny_instance


def solved(inst):
    opts = SolveOptions(log_every=0)
    res, sol = solve_instance(inst, opts)
    assert res.status in (SolveStatus.OPTIMAL, SolveStatus.GAP_REACHED)
    assert abs(res.bound - res.objective) <= max(opts.abs_gap, opts.rel_gap * abs(res.objective))
    return sol


def names(report):
    return {(v.constraint, v.index) for v in report.violations}


def test_counting_one_hour_one_pair():
    inst = make_instance([("N", 0.9)], {"N": 30.0}, hours=1, dt=15)
    assert inst.n_binaries == {"x_bid": 1, "x_acc": 1, "w_ok": 1}
    assert inst.n_soc_steps == 4
    assert inst.index["soc"].shape == (1, 5)


def test_empty_pair_set():
    with pytest.raises(ValueError, match="empty"):
        BidStructure(())


@pytest.mark.parametrize("kw", [dict(soc_start=0.0), dict(ilf=1.0), dict(dt_minutes=7), dict(soc_end=1.5)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        BessParams(**kw)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(1.0, {"N": [-1.0]})
    with pytest.raises(ValueError):
        Scenario(1.0, {"N": [1.0, 2.0], "D": [1.0]})
    with pytest.raises(ValueError, match="sum"):
        pairs = [MarketPower(MarketId.N, 0.9)]
        build_instance(BessParams(dt_minutes=60, horizon_hours=1), BidStructure(pairs),
                       [Scenario(0.6, {"N": [1.0]})], build_meb([None], pairs, 60, hours=1))


def test_ilf_zero_net_energy_exact():
    inst = make_instance([("N", 0.9)], {"N": 20.0}, hours=2, dt=15, hz=49.95, c_up=40.0, ilf=0.0,
                         soc_mode="flexible")
    sol = solved(inst)
    assert np.array_equal(sol.z_net, sol.z_dch - sol.z_ch)


def test_big_m_acceptance():
    st_ = BidStructure((MarketPower(MarketId.N, 0.9),), bid_max=100.0, eps=0.01)
    sc = Scenario(1.0, {"N": [80.0, 20.0]})
    assert compute_big_m(st_, [sc]).acceptance == pytest.approx(180.01, abs=1e-12)


def test_big_m_all_prices_zero():
    inst = make_instance([("N", 0.9), ("D", 0.6)], {}, hours=2)
    assert inst.big_m.availability == 0.0
    assert np.all(inst.lp.ub[inst.index["w_avail"]] == 0.0)


def test_big_m_availability():
    st_ = BidStructure((MarketPower(MarketId.N, 0.9),), bid_max=50.0)
    assert compute_big_m(st_, [Scenario(1.0, {"N": [10.0]})]).availability == pytest.approx(45.0, abs=1e-12)


def test_big_m_rejects_non_finite():
    st_ = BidStructure((MarketPower(MarketId.N, 0.9),), bid_max=float("inf"))
    with pytest.raises(ValueError):
        compute_big_m(st_, [Scenario(1.0, {"N": [10.0]})])


def test_settle_accepted_frequency_bid():
    inst = make_instance([("N", 0.9)], {"N": 20.0})
    sol = solved(inst)
    assert sol.x_price[0] == pytest.approx(20.0, abs=1e-9)
    pay = settle(sol, inst)
    assert pay.availability[0, 0, 0] == pytest.approx(18.0, abs=1e-9)
    assert pay.expected_profit == pytest.approx(sol.objective, abs=1e-9)


def test_settle_rejected_bid_pays_nothing():
    inst = make_instance([("N", 0.9), ("S_DCH", 0.8)], {"N": 20.0, "S_DCH": 50.0}, c_up=30.0)
    sol = Solution.from_vector(inst, np.zeros(inst.lp.shape[1]))
    sol.x_bid[0, 0] = 1.0
    sol.x_price[0] = 25.0
    pay = settle(sol, inst)
    assert pay.availability.sum() == pay.spot_revenue.sum() == pay.spot_cost.sum() == pay.energy.sum() == 0.0


def test_settle_spot_pay_as_clear():
    inst = make_instance([("S_DCH", 0.8)], {"S_DCH": 50.0})
    sol = Solution.from_vector(inst, np.zeros(inst.lp.shape[1]))
    sol.x_bid[0, 0] = sol.x_acc[0, 0, 0] = 1.0
    sol.x_price[0] = 10.0  # bid below clearing; revenue is the clearing price
    assert settle(sol, inst).spot_revenue[0, 0] == pytest.approx(40.0, abs=1e-12)


def test_validation_flags_perturbed_soc():
    inst = make_instance([("N", 0.9), ("S_CH", 0.4)], {"N": 15.0, "S_CH": 5.0}, hours=2, hz=49.97, c_up=20.0)
    sol = solved(inst)
    assert validate_solution(sol, inst).ok
    bad = sol.copy()
    bad.soc[0, 3] += 0.05
    found = names(validate_solution(bad, inst))
    assert ("soc_recursion", (0, 3)) in found
    assert {c for c, _ in found} <= {"soc_recursion", "soc_limits"}


def test_validation_flags_slack_with_ok_hour():
    inst = make_instance([("N", 0.9)], {"N": 15.0}, hours=2, hz=49.95, c_up=20.0, soc_mode="flexible")
    sol = solved(inst)
    assert sol.w_ok[0, 1] == 1.0
    bad = sol.copy()
    t = 5  # a step in hour 1
    bad.s_dch[0, t] += 0.01
    bad.z_dch[0, t] -= 0.01
    found = names(validate_solution(bad, inst))
    assert ("slack_gate", (0, 1)) in found


def test_round_trip_loss():
    # charge 0.4 MWh in hour 0, sell everything back in hour 1
    inst = make_instance([("S_CH", 0.4), ("S_DCH", 0.324)], {"S_CH": [1.0, 1000.0], "S_DCH": [0.0, 100.0]},
                         hours=2, dt=60, ilf=0.10, firm_spot=True)
    sol = solved(inst)
    drawn, delivered = sol.z_ch.sum(), sol.z_dch.sum()
    assert drawn == pytest.approx(0.4, abs=1e-9)
    assert delivered / drawn == pytest.approx(0.81, abs=1e-9)
    assert sol.soc[0, -1] == pytest.approx(0.5, abs=1e-12)
    assert sol.objective == pytest.approx(0.324 * 100 - 0.4, abs=1e-9)


def test_flexible_end_soc_within_limits():
    inst = make_instance([("S_DCH", 0.4)], {"S_DCH": 50.0}, hours=1, dt=60, soc_mode="flexible", firm_spot=True)
    sol = solved(inst)
    assert sol.x_acc[0, 0, 0] == 1.0
    assert sol.soc[0, -1] == pytest.approx(0.5 - 0.4 / 0.9, abs=1e-9)


def test_scenario_file_round_trip(tmp_path):
    from nordbess.market_data import write_frequency_csv

    write_frequency_csv(flat_trace(2, 49.98), tmp_path / "f.csv")
    sc = Scenario(1.0, {"N": [1.0, 2.0], "D": [3.0, 4.0], "S_DCH": [5.0, 6.0], "S_CH": [7.0, 8.0]},
                  [1.0, 1.0], [2.0, 2.0], trace_path="f.csv")
    save_scenarios([sc], tmp_path / "s.json")
    back = load_scenarios(tmp_path / "s.json")[0]
    assert back.frequency_trace.hours == 2
    np.testing.assert_array_equal(back.clearing_prices[MarketId.S_CH], [7.0, 8.0])


def test_scenario_file_spot_alias_and_errors(tmp_path):
    from nordbess.market_data import DataError

    p = tmp_path / "s.json"
    p.write_text(json.dumps({"probability": 1.0, "clearing_prices": {"SPOT": [3.0], "FCR_N": [1.0]}}))
    sc = load_scenarios(p)[0]
    assert sc.price(MarketId.S_DCH, 0) == sc.price(MarketId.S_CH, 0) == 3.0
    assert sc.price(MarketId.N, 0) == 1.0
    p.write_text(json.dumps({"probability": 1.0, "clearing_prices": {"aFRR": [3.0]}}))
    with pytest.raises(DataError, match="aFRR|AFRR"):
        load_scenarios(p)
    with pytest.raises(DataError, match="does not exist"):
        load_scenarios(tmp_path / "missing.json")


def test_write_solution(tmp_path):
    inst = make_instance([("N", 0.9), ("S_DCH", 0.4)], {"N": 12.0, "S_DCH": 30.0}, hours=2, hz=49.96, c_up=10.0)
    sol = solved(inst)
    write_solution(sol, inst, tmp_path / "s.json", tmp_path / "s.csv")
    d = json.loads((tmp_path / "s.json").read_text())
    assert d["objective"] == pytest.approx(sol.objective, abs=1e-8)
    assert len(d["bids"]) == 2
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 1 + inst.n_steps


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1))
def test_solution_invariants(seed):
    inst = random_tiny_instance(np.random.default_rng(seed))
    sol = solved(inst)
    rep = validate_solution(sol, inst)
    assert rep.ok, rep.violations[:5]
    # SOC conservation
    for s in range(len(inst.scenarios)):
        assert sol.soc[s, -1] - sol.soc[s, 0] == pytest.approx(-sol.z_net[s].sum(), abs=1e-9)
        if inst.params.soc_mode.value == "fixed":
            assert sol.soc[s, -1] == pytest.approx(sol.soc[s, 0], abs=1e-9)
    # at most one bid per hour
    assert np.all(np.round(sol.x_bid).sum(axis=1) <= 1)
    # pay-as-bid identity
    pw = np.array([p.power for p in inst.structure.pairs])
    freq = [k for k, p in enumerate(inst.structure.pairs) if p.market.is_freq]
    target = pw[None, None, :] * sol.x_price[None, :, None] * np.round(sol.x_acc)
    np.testing.assert_allclose(sol.w_avail[:, :, freq], target[:, :, freq], atol=1e-6)
    # gating
    sph = inst.params.steps_per_hour
    slack = (sol.s_dch + sol.s_ch).reshape(len(inst.scenarios), inst.n_hours, sph).sum(axis=2)
    paid = sol.w_energy > 1e-9
    assert np.all(sol.w_ok[paid] > 0.5)
    assert np.all(slack[sol.w_ok > 0.5] <= 1e-9)
    # settlement agrees with the objective
    assert settle(sol, inst).expected_profit == pytest.approx(sol.objective, rel=1e-6, abs=1e-6)
