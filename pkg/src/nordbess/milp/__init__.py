"""Bounded simplex, branch-and-bound and LP-format I/O."""
from .bnb import branch_and_bound
from .lp import LinearProgram, LPResult, LPStatus, SolveOptions, SolveResult, SolveStatus, SolverError
from .lpformat import LPFormatError, export_lp_text, parse_lp_text
from .simplex import solve_lp

__all__ = [
    "LinearProgram", "LPResult", "LPStatus", "SolveOptions", "SolveResult", "SolveStatus", "SolverError",
    "branch_and_bound", "solve_lp", "export_lp_text", "parse_lp_text", "LPFormatError",
]
