"""Best-first branch-and-bound over the bounded simplex.

Nodes only differ from the root in variable bounds. Each child is
re-optimized with the dual simplex from its parent's optimal basis. The
branching variable maximizes the pseudocost product score; variables
without history use the mean pseudocost of the others, so the first choice
is the most fractional variable (lowest index on ties). The open node with the best bound is expanded next (lowest node id on
ties), so a run is fully deterministic. A diving heuristic (repeatedly fix
the least fractional integer and re-solve) runs at the root and every
``dive_every`` expanded nodes to find incumbents early.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, LPStatus, SolveOptions, SolveResult, SolveStatus, SolverError
from .simplex import BoundedSimplex

__all__ = ["branch_and_bound"]


@dataclass
class _Node:
    id: int
    parent: int
    depth: int
    bound: float  # minimization bound inherited from the parent
    lb: np.ndarray
    ub: np.ndarray
    basis: tuple | None
    var: int = -1  # branching variable that created this node
    up: bool = False
    step: float = 0.0  # distance the branching variable was moved


def _fmt(v: float) -> str:
    return "-" if not math.isfinite(v) else f"{v:.10g}"


def _fractional(x, ints, tol):
    frac = np.abs(x[ints] - np.round(x[ints]))
    return frac, frac > tol


def _choose(x, ints, mask, pc_sum, pc_cnt, rule: str) -> int:
    f = x[ints] - np.floor(x[ints])
    if rule == "most_fractional":
        return int(ints[np.argmax(np.where(mask, np.minimum(f, 1.0 - f), -1.0))])
    pcs = []
    for d in (0, 1):
        cnt = pc_cnt[d, ints]
        known = cnt > 0
        mean = float(np.sum(pc_sum[d, ints][known] / cnt[known]) / known.sum()) if known.any() else 1.0
        pcs.append(np.where(known, pc_sum[d, ints] / np.maximum(cnt, 1), mean))
    score = np.maximum(pcs[0] * f, 1e-6) * np.maximum(pcs[1] * (1.0 - f), 1e-6)
    return int(ints[np.argmax(np.where(mask, score, -1.0))])


def branch_and_bound(lp: LinearProgram, options: SolveOptions = SolveOptions(), log_file=None,
                     incumbent=None) -> SolveResult:
    """Solve a mixed-integer program with bounded integer variables.

    The log holds one line per expanded node (every ``log_every``-th node):
    ``node``, ``depth``, the node bound, the incumbent and the relative gap,
    all in the sense of ``lp``. An optional ``incumbent`` warm start is used
    only if it is feasible and integral.
    """
    t0 = time.perf_counter()
    sign = -1.0 if lp.sense == "max" else 1.0  # internal minimization
    ints = np.flatnonzero(lp.integer)
    solver = BoundedSimplex(lp, options.feas_tol, options.bland_after)
    lines: list[str] = []
    node_bounds: list[tuple[int, int, float, float]] = []

    def emit(line: str, node_id: int | None = None):
        if node_id is not None and (options.log_every <= 0 or node_id % options.log_every):
            return
        lines.append(line)
        if log_file is not None:
            log_file.write(line + "\n")

    inc_x: np.ndarray | None = None
    inc_val = math.inf

    def offer(x: np.ndarray, lb: np.ndarray, ub: np.ndarray, basis) -> bool:
        """Polish an integral point (continuous part re-optimized) and keep it if better."""
        nonlocal inc_x, inc_val
        flb, fub = lb.copy(), ub.copy()
        flb[ints] = fub[ints] = np.round(x[ints])
        pol = solver.solve(flb, fub, basis)
        x = pol.x if pol.status is LPStatus.OPTIMAL else x.copy()
        x[ints] = np.round(x[ints])  # exact values; the polish LP had them fixed
        val = sign * lp.objective(x)
        if val < inc_val and lp.max_violation(x) <= 1e3 * options.feas_tol * (1 + np.max(np.abs(x), initial=0)):
            inc_val, inc_x = val, x
            return True
        return False

    def dive(lb: np.ndarray, ub: np.ndarray, x: np.ndarray, basis) -> None:
        """Fix the least fractional integer to its nearest value until integral or infeasible."""
        lb, ub = lb.copy(), ub.copy()
        for _ in range(len(ints) + 1):
            frac, mask = _fractional(x, ints, options.int_tol)
            if not mask.any():
                offer(x, lb, ub, basis)
                return
            j = int(ints[np.argmin(np.where(mask, np.minimum(frac, 1 - frac), np.inf))])
            near = float(np.round(x[j]))
            for v in (near, math.floor(x[j]) if near > x[j] else math.ceil(x[j])):
                tlb, tub = lb.copy(), ub.copy()
                tlb[j] = tub[j] = v
                r = solver.solve(tlb, tub, basis)
                if r.status is LPStatus.OPTIMAL and sign * r.objective < inc_val - gap_tol(inc_val):
                    lb, ub, x, basis = tlb, tub, r.x, r.basis
                    break
            else:
                return

    if incumbent is not None:
        x0 = np.asarray(incumbent, dtype=float).copy()
        if x0.shape == (lp.shape[1],) and np.all(np.abs(x0[ints] - np.round(x0[ints])) <= options.int_tol):
            x0[ints] = np.round(x0[ints])
            if lp.max_violation(x0) <= 1e-6 * (1 + np.max(np.abs(x0), initial=0)):
                inc_x, inc_val = x0, sign * lp.objective(x0)
        emit("warm start accepted" if inc_x is not None else "warm start rejected")

    pc_sum = np.zeros((2, lp.shape[1]))  # objective degradation per unit, down/up
    pc_cnt = np.zeros((2, lp.shape[1]))
    next_id = 0
    heap: list[tuple[float, int, _Node]] = []
    root = _Node(0, -1, 0, -math.inf, lp.lb.copy(), lp.ub.copy(), None)
    heapq.heappush(heap, (root.bound, root.id, root))
    next_id = 1
    expanded = 0
    status = None

    def gap_tol(val: float) -> float:
        return max(options.abs_gap, options.rel_gap * abs(val)) if math.isfinite(val) else 0.0

    while heap:
        bound, _, node = heap[0]
        if inc_x is not None and bound >= inc_val - gap_tol(inc_val):
            status = SolveStatus.GAP_REACHED  # open nodes remain but none can beat the gap
            break
        heapq.heappop(heap)
        if expanded >= options.node_limit or time.perf_counter() - t0 > options.time_limit:
            heapq.heappush(heap, (bound, node.id, node))
            status = SolveStatus.LIMIT
            break
        expanded += 1
        res = solver.solve(node.lb, node.ub, node.basis)
        if res.status is LPStatus.INFEASIBLE:
            emit(f"node={node.id} depth={node.depth} infeasible", node.id)
            continue
        if res.status is LPStatus.UNBOUNDED:
            if node.id == 0:
                raise SolverError("LP relaxation is unbounded")
            continue
        if res.status is not LPStatus.OPTIMAL:
            raise SolverError(f"LP at node {node.id} ended with {res.status.value}")
        val = sign * res.objective
        if node.var >= 0 and node.step > 0:
            d = 1 if node.up else 0
            pc_sum[d, node.var] += max(0.0, val - node.bound) / node.step
            pc_cnt[d, node.var] += 1
        node_bounds.append((node.id, node.parent, sign * val, sign * inc_val if inc_x is not None else math.nan))
        if inc_x is not None and val >= inc_val - gap_tol(inc_val):
            emit(f"node={node.id} depth={node.depth} bound={_fmt(sign * val)} pruned", node.id)
            continue
        x = res.x
        frac, frac_mask = _fractional(x, ints, options.int_tol)
        if not frac_mask.any():
            offer(x, node.lb, node.ub, res.basis)
            emit(f"node={node.id} depth={node.depth} bound={_fmt(sign * val)} incumbent={_fmt(sign * inc_val)} integral", node.id)
            continue
        if options.dive_every > 0 and (expanded - 1) % options.dive_every == 0:
            dive(node.lb, node.ub, x, res.basis)
            if inc_x is not None and val >= inc_val - gap_tol(inc_val):
                continue
        j = _choose(x, ints, frac_mask, pc_sum, pc_cnt, options.branching)
        gap = abs(inc_val - val) / max(1e-10, abs(inc_val)) if inc_x is not None else math.inf
        emit(f"node={node.id} depth={node.depth} bound={_fmt(sign * val)} incumbent={_fmt(sign * inc_val) if inc_x is not None else '-'} gap={_fmt(gap)} branch=x{j}", node.id)
        down_ub = node.ub.copy()
        down_ub[j] = math.floor(x[j])
        up_lb = node.lb.copy()
        up_lb[j] = math.ceil(x[j])
        f = x[j] - math.floor(x[j])
        for clb, cub, up, step in ((node.lb, down_ub, False, f), (up_lb, node.ub, True, 1.0 - f)):
            child = _Node(next_id, node.id, node.depth + 1, val, clb, cub, res.basis, j, up, step)
            heapq.heappush(heap, (val, next_id, child))
            next_id += 1

    if status is None:
        status = SolveStatus.OPTIMAL
    if inc_x is None:
        if status is SolveStatus.LIMIT:
            best = heap[0][0] if heap else math.inf
            return SolveResult(SolveStatus.LIMIT, None, math.nan, sign * best, expanded, solver.iterations, lines, node_bounds)
        return SolveResult(SolveStatus.INFEASIBLE, None, math.nan, math.nan, expanded, solver.iterations, lines, node_bounds)
    best_bound = min([inc_val] + [b for b, _, _ in heap])
    obj = sign * inc_val
    return SolveResult(status, inc_x, obj, sign * best_bound, expanded, solver.iterations, lines, node_bounds)
