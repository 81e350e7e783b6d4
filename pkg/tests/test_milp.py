import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy import sparse

from helpers import make_instance
from nordbess.milp import (
    LinearProgram,
    LPFormatError,
    LPStatus,
    SolveOptions,
    SolveStatus,
    branch_and_bound,
    export_lp_text,
    parse_lp_text,
    solve_lp,
)
from nordbess.oracle import OracleCapExceeded, brute_force_oracle
from nordbess.scheduling import solve_instance, validate_solution
from nordbess.synthetic import random_tiny_instance

QUIET = SolveOptions(log_every=0)


def lp(A, senses, rhs, c, lb=None, ub=None, sense="max", integer=None, **kw):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    return LinearProgram(sparse.csr_matrix(A), senses, rhs, np.zeros(n) if lb is None else lb,
                         np.full(n, np.inf) if ub is None else ub, c, sense, integer, **kw)


def test_lp_single_variable():
    r = solve_lp(lp([[1.0]], ["<"], [3.0], [1.0]))
    assert r.status is LPStatus.OPTIMAL
    assert r.x[0] == pytest.approx(3.0) and r.objective == pytest.approx(3.0)


def test_lp_infeasible():
    r = solve_lp(lp([[1.0], [1.0]], ["<", ">"], [1.0, 2.0], [1.0]))
    assert r.status is LPStatus.INFEASIBLE


def test_lp_unbounded():
    r = solve_lp(lp([[1.0, -1.0]], ["<"], [1.0], [1.0, 0.0]))
    assert r.status is LPStatus.UNBOUNDED


def test_lp_transport_hand_solution():
    # two plants (supply 30, 20) ship to one market needing 40; unit costs 3 and 5
    prob = lp([[1, 0], [0, 1], [1, 1]], ["<", "<", "="], [30, 20, 40], [3.0, 5.0], sense="min")
    r = solve_lp(prob)
    np.testing.assert_allclose(r.x, [30, 10], atol=1e-9)
    assert r.objective == pytest.approx(140.0)


def test_lp_duals_complementary():
    prob = lp([[1, 0], [0, 1], [1, 1]], ["<", "<", "="], [30, 20, 40], [3.0, 5.0], sense="min")
    r = solve_lp(prob)
    # the cheap plant's capacity row is binding and worth 5 - 3 per unit
    assert abs(r.duals[0]) == pytest.approx(2.0)
    assert r.duals[1] == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lp_matches_highs(seed):
    from scipy.optimize import linprog

    rng = np.random.default_rng(seed)
    m, n = rng.integers(2, 7), rng.integers(2, 7)
    A = rng.uniform(-1, 2, (m, n))
    b = rng.uniform(1, 5, m)
    c = rng.uniform(-1, 3, n)
    ub = rng.uniform(1, 4, n)
    r = solve_lp(lp(A, ["<"] * m, b, c, ub=ub))
    ref = linprog(-c, A_ub=A, b_ub=b, bounds=list(zip(np.zeros(n), ub)), method="highs")
    assert r.status is LPStatus.OPTIMAL
    assert r.objective == pytest.approx(-ref.fun, rel=1e-9, abs=1e-9)


def test_bnb_integral_root():
    prob = lp([[1.0, 1.0]], ["<"], [1.0], [2.0, 1.0], ub=np.ones(2), integer=[True, True])
    res = branch_and_bound(prob, QUIET)
    assert res.status is SolveStatus.OPTIMAL
    assert res.nodes == 1
    assert res.objective == pytest.approx(2.0)


def test_bnb_knapsack_matches_enumeration():
    w, v, cap = np.array([3.0, 4.0]), np.array([5.0, 6.0]), 5.0
    prob = lp([w], ["<"], [cap], v, ub=np.ones(2), integer=[True, True])
    res = branch_and_bound(prob, QUIET)
    best = max(v @ np.array(x) for x in itertools.product((0, 1), repeat=2) if w @ np.array(x) <= cap)
    assert res.objective == pytest.approx(best)
    assert res.x[1] == 1.0


def test_bnb_infeasible_and_limit():
    prob = lp([[2.0]], ["="], [1.0], [1.0], ub=[1.0], integer=[True])
    assert branch_and_bound(prob, QUIET).status is SolveStatus.INFEASIBLE
    knap = lp([[3.0, 4.0, 5.0]], ["<"], [7.5], [4.0, 5.0, 6.5], ub=np.ones(3), integer=[True] * 3)
    res = branch_and_bound(knap, SolveOptions(node_limit=1, log_every=0, dive_every=0))
    assert res.status is SolveStatus.LIMIT


@pytest.mark.parametrize("branching", ["pseudocost", "most_fractional"])
def test_bnb_scheduling_matches_oracle(branching):
    inst = make_instance([("N", 0.9), ("S_DCH", 0.4)], {"N": [12.0, 30.0], "S_DCH": [40.0, 10.0]},
                         hours=2, hz=49.97, c_up=25.0, soc_mode="flexible")
    res, sol = solve_instance(inst, SolveOptions(log_every=0, branching=branching))
    orc = brute_force_oracle(inst)
    assert res.objective == pytest.approx(orc.objective, rel=1e-6, abs=1e-6)


def test_bnb_log_lines_and_throttle():
    inst = random_tiny_instance(np.random.default_rng(11))
    full = branch_and_bound(inst.lp, SolveOptions(log_every=1))
    assert full.log and all(line.startswith("node=") for line in full.log)
    assert "bound=" in full.log[0]
    assert branch_and_bound(inst.lp, QUIET).log == []


def test_warm_start():
    inst = random_tiny_instance(np.random.default_rng(5))
    res = branch_and_bound(inst.lp, QUIET)
    warm = branch_and_bound(inst.lp, SolveOptions(log_every=1), incumbent=res.x)
    assert warm.log[0] == "warm start accepted"
    assert warm.objective == pytest.approx(res.objective, rel=1e-9, abs=1e-9)
    junk = np.full(inst.lp.shape[1], 0.5)
    cold = branch_and_bound(inst.lp, SolveOptions(log_every=1), incumbent=junk)
    assert cold.log[0] == "warm start rejected"


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(rel_gap=-1)
    with pytest.raises(ValueError):
        SolveOptions(branching="random")


def test_linear_program_validation():
    with pytest.raises(ValueError, match="NaN"):
        lp([[np.nan]], ["<"], [1.0], [1.0])
    with pytest.raises(ValueError, match="finite"):
        lp([[1.0]], ["<"], [1.0], [1.0], integer=[True])


def _weak_duality(res, sense="max"):
    by_id = {nid: (parent, bound, inc) for nid, parent, bound, inc in res.node_bounds}
    parents = {parent for parent, _, _ in by_id.values()}
    tol = lambda v: 1e-8 * max(1.0, abs(v))
    for nid, (parent, bound, inc) in by_id.items():
        if parent in by_id:
            assert bound <= by_id[parent][1] + tol(bound)
        if nid in parents and not math.isnan(inc):
            assert bound >= inc - max(1e-6 * abs(inc), tol(inc))
    root = by_id[0][1]
    assert root >= res.objective - tol(root)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1))
def test_bnb_properties(seed):
    inst = random_tiny_instance(np.random.default_rng(seed))
    a, sol = solve_instance(inst, QUIET)
    b, _ = solve_instance(inst, QUIET)
    # determinism
    assert (a.nodes, a.objective) == (b.nodes, b.objective)
    assert np.array_equal(a.x, b.x)
    _weak_duality(a)
    # incumbent feasibility and oracle equivalence
    assert validate_solution(sol, inst).ok
    orc = brute_force_oracle(inst)
    assert abs(a.objective - orc.objective) <= 1e-6 * max(1.0, abs(orc.objective))


def test_oracle_no_bid_flat_soc():
    inst = make_instance([("N", 0.9), ("S_DCH", 0.8)], {}, hours=2)
    orc = brute_force_oracle(inst)
    assert orc.objective == 0.0
    np.testing.assert_allclose(orc.soc_paths[0], 0.5)


def test_oracle_single_hour_closed_form():
    inst = make_instance([("N", 0.9)], {"N": 30.0})
    assert brute_force_oracle(inst).objective == pytest.approx(0.9 * 30.0, abs=1e-9)
    # half activation for an hour: 0.45 MWh discharged, paid at c_up
    inst = make_instance([("N", 0.9)], {"N": 30.0}, hz=49.95, c_up=40.0, soc_mode="flexible")
    orc = brute_force_oracle(inst)
    assert orc.bids[0] == (0, pytest.approx(30.0))
    assert orc.objective == pytest.approx(0.9 * 30.0 + 40.0 * 0.45, abs=1e-9)


def test_oracle_skips_worthless_spot():
    inst = make_instance([("S_DCH", 0.4), ("N", 0.3)], {"N": [5.0, 1.0, 3.0], "S_DCH": 0.0}, hours=3,
                         soc_mode="flexible")
    orc = brute_force_oracle(inst)
    assert all(b is None or b[0] != 0 for b in orc.bids)


def test_oracle_cap():
    inst = random_tiny_instance(np.random.default_rng(0))
    with pytest.raises(OracleCapExceeded):
        brute_force_oracle(inst, cap=2)


def test_export_one_variable_five_lines():
    text = export_lp_text(lp([[1.0]], ["<"], [3.0], [1.0], var_names=["x"], row_names=["cap"]))
    assert text.splitlines() == ["Maximize", " obj: x", "Subject To", " cap: x <= 3", "End"]


def test_export_sections():
    prob = lp([[1.0, 2.5, -1.0]], [">"], [-2.0], [1.0, 0.0, -3.25], lb=[0, -np.inf, 1], ub=[1, np.inf, 4],
              sense="min", integer=[True, False, False], var_names=["b", "f", "y"], row_names=["r"])
    text = export_lp_text(prob)
    assert "Minimize" in text and " f free" in text and " 1 <= y <= 4" in text and "Binaries\n b" in text
    assert " r: b + 2.5 f - y >= -2" in text


def test_export_rejects_bad_names():
    with pytest.raises(LPFormatError):
        export_lp_text(lp([[1.0, 1.0]], ["<"], [1.0], [1.0, 1.0], var_names=["x", "x"]))
    with pytest.raises(LPFormatError):
        export_lp_text(lp([[1.0]], ["<"], [1.0], [1.0], var_names=["1bad"]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_export_parse_fixpoint(seed):
    inst = random_tiny_instance(np.random.default_rng(seed))
    text = export_lp_text(inst.lp)
    back = parse_lp_text(text)
    assert export_lp_text(back) == text
    assert back.var_names == inst.lp.var_names
    assert (back.A != inst.lp.A).nnz == 0
    np.testing.assert_array_equal(back.lb, inst.lp.lb)
    np.testing.assert_array_equal(back.ub, inst.lp.ub)
    np.testing.assert_array_equal(back.integer, inst.lp.integer)


def test_external_solver_agrees():
    highspy = pytest.importorskip("highspy")
    inst = random_tiny_instance(np.random.default_rng(21))
    res, _ = solve_instance(inst, QUIET)
    obj = _highs_objective(highspy, export_lp_text(inst.lp))
    assert obj == pytest.approx(res.objective, rel=1e-6, abs=1e-6)


def _highs_objective(highspy, text, tmpdir=None):
    import os
    import tempfile

    fd, path = tempfile.mkstemp(suffix=".lp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    try:
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("mip_rel_gap", 1e-9)
        h.readModel(path)
        h.run()
        return h.getInfo().objective_function_value
    finally:
        os.unlink(path)
