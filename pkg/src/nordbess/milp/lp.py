"""Problem and result containers shared by the simplex and branch-and-bound code."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse

__all__ = ["LinearProgram", "SolveOptions", "SolveStatus", "SolveResult", "LPStatus", "LPResult", "SolverError"]


class SolverError(RuntimeError):
    """Numerical breakdown or malformed input inside the solver."""


@dataclass
class LinearProgram:
    """``opt c'x`` subject to ``A x (<=|>=|=) rhs`` and ``lb <= x <= ub``.

    ``senses`` holds one of ``"<"``, ``">"``, ``"="`` per row.
    """

    A: sparse.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    sense: str = "max"
    integer: np.ndarray | None = None
    var_names: list[str] | None = None
    row_names: list[str] | None = None
    obj_offset: float = 0.0

    def __post_init__(self):
        self.A = sparse.csr_matrix(self.A, dtype=float)
        m, n = self.A.shape
        self.senses = np.asarray(self.senses, dtype="<U1").reshape(m)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(m)
        self.lb = np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.asarray(self.ub, dtype=float).reshape(n)
        self.c = np.asarray(self.c, dtype=float).reshape(n)
        self.integer = np.zeros(n, bool) if self.integer is None else np.asarray(self.integer, bool).reshape(n)
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        if set(np.unique(self.senses)) - {"<", ">", "="}:
            raise ValueError("row senses must be '<', '>' or '='")
        for name, arr in (("A", self.A.data), ("rhs", self.rhs), ("c", self.c)):
            if np.isnan(arr).any():
                raise ValueError(f"NaN in {name}")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(~np.isfinite(self.lb[self.integer])) or np.any(~np.isfinite(self.ub[self.integer])):
            raise ValueError("integer variables need finite bounds")
        if self.var_names is None:
            self.var_names = [f"x{j}" for j in range(n)]
        if self.row_names is None:
            self.row_names = [f"c{i}" for i in range(m)]

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @property
    def row_lo(self) -> np.ndarray:
        return np.where(self.senses == "<", -np.inf, self.rhs)

    @property
    def row_hi(self) -> np.ndarray:
        return np.where(self.senses == ">", np.inf, self.rhs)

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.obj_offset)

    def max_violation(self, x, lb=None, ub=None) -> float:
        """Largest absolute row or bound violation of ``x``."""
        x = np.asarray(x, dtype=float)
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        act = self.A @ x
        v = [np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0),
             np.max(self.row_lo - act, initial=0.0), np.max(act - self.row_hi, initial=0.0)]
        return float(max(v))


@dataclass(frozen=True)
class SolveOptions:
    rel_gap: float = 1e-6
    abs_gap: float = 1e-9
    node_limit: int = 1_000_000
    time_limit: float = 600.0
    feas_tol: float = 1e-8
    int_tol: float = 1e-6
    bland_after: int = 10_000
    log_every: int = 1
    dive_every: int = 50  # expanded nodes between diving heuristics; 0 disables diving
    branching: str = "pseudocost"  # or "most_fractional"

    def __post_init__(self):
        if self.rel_gap < 0 or self.abs_gap < 0:
            raise ValueError("gaps must be nonnegative")
        if self.branching not in ("pseudocost", "most_fractional"):
            raise ValueError("branching must be 'pseudocost' or 'most_fractional'")


class LPStatus(str, Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"
    ITERATION_LIMIT = "ITERATION_LIMIT"


@dataclass
class LPResult:
    status: LPStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals: np.ndarray | None = None
    basis: tuple | None = field(default=None, repr=False)
    iterations: int = 0


class SolveStatus(str, Enum):
    OPTIMAL = "OPTIMAL"
    GAP_REACHED = "GAP_REACHED"
    INFEASIBLE = "INFEASIBLE"
    LIMIT = "LIMIT"


@dataclass
class SolveResult:
    status: SolveStatus
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int
    lp_iterations: int = 0
    log: list[str] = field(default_factory=list, repr=False)
    node_bounds: list[tuple[int, int, float, float]] = field(default_factory=list, repr=False)  # (id, parent, bound, incumbent)

    @property
    def gap(self) -> float:
        if self.x is None:
            return float("inf")
        return abs(self.bound - self.objective)
