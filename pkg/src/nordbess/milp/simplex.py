"""Bounded-variable revised simplex (primal and dual).

Rows are handled through explicit row-activity variables: ``A x - r = 0``
with ``row_lo <= r <= row_hi``, so every constraint becomes a bound and the
initial basis is the (negated) identity over the row variables. Nonbasic
variables sit at a finite bound, or at zero when free.

The basis is held as a sparse LU factorization plus a product-form eta
file; it is refactorized every ``REFACTOR_EVERY`` pivots. Pricing is
Dantzig's rule and switches to Bland's rule after ``bland_after``
consecutive degenerate pivots.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .lp import LinearProgram, LPResult, LPStatus, SolverError

__all__ = ["BoundedSimplex", "solve_lp"]

BASIC, LOWER, UPPER, FREE = 0, 1, 2, 3
REFACTOR_EVERY = 64
PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9


class BoundedSimplex:
    """Reusable simplex workspace for one constraint matrix.

    Bounds may change between calls to :meth:`solve`, which is how
    branch-and-bound reuses the factorized matrix and parent bases.
    """

    def __init__(self, lp: LinearProgram, feas_tol: float = 1e-8, bland_after: int = 10_000):
        self.lp = lp
        m, n = lp.shape
        self.m, self.n = m, n
        self.N = n + m
        self.A = sparse.hstack([lp.A, -sparse.identity(m, format="csr")], format="csc")
        self.AT = self.A.T.tocsr()
        sign = -1.0 if lp.sense == "max" else 1.0
        self.c = np.concatenate([sign * lp.c, np.zeros(m)])
        self.sign = sign
        self.row_lo = lp.row_lo
        self.row_hi = lp.row_hi
        self.feas_tol = feas_tol
        self.bland_after = bland_after
        self.iterations = 0

    # -- linear algebra helpers ------------------------------------------------
    def _col(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        a, b = self.A.indptr[j], self.A.indptr[j + 1]
        col[self.A.indices[a:b]] = self.A.data[a:b]
        return col

    def _refactor(self):
        B = self.A[:, self.basis].tocsc()
        try:
            with np.errstate(all="raise"):
                self._lu = splu(B, permc_spec="COLAMD", diag_pivot_thresh=1.0)
        except (RuntimeError, FloatingPointError) as exc:
            raise SolverError(f"singular basis after {self.iterations} pivots") from exc
        self._etas: list[tuple[int, np.ndarray]] = []
        self._since_refactor = 0
        self._recompute_xb()

    def ftran(self, v: np.ndarray) -> np.ndarray:
        """Solve ``B x = v`` for the current basis."""
        x = self._lu.solve(v)
        for r, a in self._etas:
            xr = x[r] / a[r]
            x -= a * xr
            x[r] = xr
        return x

    def btran(self, v: np.ndarray) -> np.ndarray:
        """Solve ``B' y = v`` for the current basis."""
        w = np.array(v, dtype=float)
        for r, a in reversed(self._etas):
            w[r] = w[r] - (a @ w - w[r]) / a[r]
        return self._lu.solve(w, trans="T")

    def _recompute_xb(self):
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = -self.ftran(self.A @ xn)

    def _pivot(self, r: int, q: int, alpha: np.ndarray):
        self._etas.append((r, alpha.copy()))
        self.basis[r] = q
        self.status[q] = BASIC
        self._since_refactor += 1
        self.iterations += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self._refactor()

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = self.btran(cost[self.basis])
        d = cost - self.AT @ y
        d[self.basis] = 0.0
        return d

    # -- setup -------------------------------------------------------------
    def _init_state(self, lb: np.ndarray, ub: np.ndarray, basis=None):
        self.lb = np.concatenate([lb, self.row_lo])
        self.ub = np.concatenate([ub, self.row_hi])
        self.x = np.zeros(self.N)
        if basis is None:
            self.basis = np.arange(self.n, self.N)
            self.status = np.full(self.N, FREE, dtype=np.int8)
            self.status[self.basis] = BASIC
            nb = np.arange(self.n)
        else:
            self.basis = np.array(basis[0], dtype=int)
            self.status = np.array(basis[1], dtype=np.int8)
            nb = np.flatnonzero(self.status != BASIC)
        st = self.status[nb]
        lo, hi = self.lb[nb], self.ub[nb]
        fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
        at_hi = (st == UPPER) & fin_hi
        at_lo = ~at_hi & (((st == LOWER) & fin_lo) | fin_lo)
        at_hi |= ~at_lo & fin_hi
        self.status[nb] = np.where(at_hi, UPPER, np.where(at_lo, LOWER, FREE))
        self.x[nb] = np.where(at_hi, hi, np.where(at_lo, lo, 0.0))
        self._refactor()

    def basis_state(self) -> tuple:
        return (self.basis.copy(), self.status.copy())

    # -- feasibility measures ------------------------------------------------
    def _primal_infeasibility(self) -> np.ndarray:
        xb = self.x[self.basis]
        return np.maximum(self.lb[self.basis] - xb, 0.0) + np.maximum(xb - self.ub[self.basis], 0.0)

    def _dual_infeasible(self, d: np.ndarray) -> bool:
        st = self.status
        movable = self.ub > self.lb
        bad = ((st == LOWER) & (d < -DUAL_TOL) & movable) | ((st == UPPER) & (d > DUAL_TOL) & movable) | (
            (st == FREE) & (np.abs(d) > DUAL_TOL))
        return bool(bad.any())

    # -- primal simplex ------------------------------------------------------
    def _primal(self, max_iter: int) -> LPStatus:
        degenerate = 0
        tol = self.feas_tol
        for _ in range(max_iter):
            xb = self.x[self.basis]
            lbB, ubB = self.lb[self.basis], self.ub[self.basis]
            below = xb < lbB - tol
            above = xb > ubB + tol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cost = np.zeros(self.N)
                cost[self.basis[below]] = -1.0
                cost[self.basis[above]] = 1.0
            else:
                cost = self.c
            d = self._reduced_costs(cost)
            st = self.status
            movable = self.ub > self.lb
            cand_inc = ((st == LOWER) & movable & (d < -DUAL_TOL)) | ((st == FREE) & (d < -DUAL_TOL))
            cand_dec = ((st == UPPER) & movable & (d > DUAL_TOL)) | ((st == FREE) & (d > DUAL_TOL))
            cand = cand_inc | cand_dec
            if not cand.any():
                return LPStatus.INFEASIBLE if phase1 else LPStatus.OPTIMAL
            use_bland = degenerate >= self.bland_after
            if use_bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if cand_inc[q] else -1.0
            alpha = self.ftran(self._col(q))
            rate = -direction * alpha  # d x_B / d theta
            # ratio test
            theta = np.inf
            r = -1
            hit_upper = False
            hit_value = 0.0
            nz = np.flatnonzero(np.abs(rate) > PIVOT_TOL)
            if nz.size:
                rt = rate[nz]
                x_nz = xb[nz]
                lo_nz, hi_nz = lbB[nz], ubB[nz]
                if phase1:
                    bl, ab = below[nz], above[nz]
                    lim_dec = np.where(ab, hi_nz, np.where(bl, -np.inf, lo_nz))
                    lim_inc = np.where(bl, lo_nz, np.where(ab, np.inf, hi_nz))
                else:
                    lim_dec, lim_inc = lo_nz, hi_nz
                with np.errstate(invalid="ignore", divide="ignore"):
                    ratios = np.where(rt < 0, (x_nz - lim_dec) / -rt, (lim_inc - x_nz) / rt)
                ratios = np.where(np.isnan(ratios), np.inf, np.maximum(ratios, 0.0))
                best = ratios.min()
                if np.isfinite(best):
                    ties = np.flatnonzero(ratios <= best + 1e-12)
                    if use_bland:
                        k = ties[np.argmin(self.basis[nz[ties]])]
                    else:
                        k = ties[np.argmax(np.abs(rt[ties]))]
                    theta = float(ratios[k])
                    r = int(nz[k])
                    hit_value = float(lim_inc[k] if rt[k] > 0 else lim_dec[k])
                    hit_upper = hit_value == hi_nz[k] and hit_value != lo_nz[k]
            span = self.ub[q] - self.lb[q]
            if span <= theta:
                if not np.isfinite(span):
                    if phase1:
                        raise SolverError("phase 1 ray without blocking variable")
                    return LPStatus.UNBOUNDED
                # bound flip, basis unchanged
                self.x[self.basis] += span * rate
                self.x[q] = self.ub[q] if direction > 0 else self.lb[q]
                self.status[q] = UPPER if direction > 0 else LOWER
                self.iterations += 1
                degenerate = 0
                continue
            if r < 0:
                return LPStatus.UNBOUNDED
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            leaving = self.basis[r]
            self.x[self.basis] += theta * rate
            self.x[q] += direction * theta
            self.x[leaving] = hit_value
            self.status[leaving] = UPPER if hit_upper else LOWER
            self._pivot(r, q, alpha)
        return LPStatus.ITERATION_LIMIT

    # -- dual simplex --------------------------------------------------------
    def _dual(self, max_iter: int) -> LPStatus:
        degenerate = 0
        tol = self.feas_tol
        for _ in range(max_iter):
            infeas = self._primal_infeasibility()
            if infeas.max(initial=0.0) <= tol:
                return LPStatus.OPTIMAL
            use_bland = degenerate >= self.bland_after
            if use_bland:
                r = int(np.flatnonzero(infeas > tol)[np.argmin(self.basis[infeas > tol])])
            else:
                r = int(np.argmax(infeas))
            p = self.basis[r]
            to_lower = self.x[p] < self.lb[p]
            d = self._reduced_costs(self.c)
            e_r = np.zeros(self.m)
            e_r[r] = 1.0
            rho = self.btran(e_r)
            arow = self.AT @ rho
            st = self.status
            movable = self.ub > self.lb
            if to_lower:
                elig = ((st == LOWER) & movable & (arow < -PIVOT_TOL)) | ((st == UPPER) & movable & (arow > PIVOT_TOL))
            else:
                elig = ((st == LOWER) & movable & (arow > PIVOT_TOL)) | ((st == UPPER) & movable & (arow < -PIVOT_TOL))
            elig |= (st == FREE) & (np.abs(arow) > PIVOT_TOL)
            idx = np.flatnonzero(elig)
            if idx.size == 0:
                return LPStatus.INFEASIBLE
            dj = d[idx]
            dj = np.where(st[idx] == LOWER, np.maximum(dj, 0.0), np.where(st[idx] == UPPER, np.minimum(dj, 0.0), dj))
            ratios = np.abs(dj) / np.abs(arow[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            if use_bland:
                q = int(ties[0])
            else:
                q = int(ties[np.argmax(np.abs(arow[ties]))])
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            alpha = self.ftran(self._col(q))
            if abs(alpha[r]) < PIVOT_TOL:
                self._refactor()
                continue
            target = self.lb[p] if to_lower else self.ub[p]
            delta = (self.x[p] - target) / alpha[r]
            self.x[self.basis] -= delta * alpha
            self.x[q] += delta
            self.x[p] = target
            self.status[p] = LOWER if to_lower else UPPER
            if self.lb[p] == self.ub[p]:
                self.status[p] = LOWER
            self._pivot(r, q, alpha)
        return LPStatus.ITERATION_LIMIT

    # -- driver --------------------------------------------------------------
    def solve(self, lb=None, ub=None, basis=None, max_iter: int | None = None) -> LPResult:
        lb = self.lp.lb if lb is None else np.asarray(lb, dtype=float)
        ub = self.lp.ub if ub is None else np.asarray(ub, dtype=float)
        if np.any(lb > ub + 1e-12):
            return LPResult(LPStatus.INFEASIBLE)
        start_iter = self.iterations
        max_iter = max_iter or 50 * (self.m + self.n) + 1000
        self._init_state(lb, ub, basis)
        status = None
        if basis is not None and not self._dual_infeasible(self._reduced_costs(self.c)):
            status = self._dual(max_iter)
            if status is LPStatus.OPTIMAL and self._dual_infeasible(self._reduced_costs(self.c)):
                status = None  # numerical drift; finish with the primal method
        if status is None:
            status = self._primal(max_iter)
        if status is LPStatus.OPTIMAL and self._etas:
            self._refactor()
            if self._primal_infeasibility().max(initial=0.0) > 10 * self.feas_tol:
                status = self._primal(max_iter)
        iters = self.iterations - start_iter
        if status is not LPStatus.OPTIMAL:
            return LPResult(status, iterations=iters)
        x = self.x[: self.n].copy()
        y = self.btran(self.c[self.basis])
        return LPResult(
            LPStatus.OPTIMAL,
            x,
            self.lp.objective(x),
            self.sign * y,
            self.basis_state(),
            iters,
        )


def solve_lp(lp: LinearProgram, feas_tol: float = 1e-8, lb=None, ub=None) -> LPResult:
    """Solve the continuous relaxation of ``lp`` from a slack basis.

    Returns OPTIMAL with primal values and row duals, or INFEASIBLE /
    UNBOUNDED. Integrality markers are ignored.
    """
    return BoundedSimplex(lp, feas_tol).solve(lb, ub)
