"""Exact MILP solving: simplex LP relaxation, branch-and-bound, brute force, LP export."""

from .bnb import (Solution, SolveConfig, branch_and_bound, envelope_rows, relative_gap, rounding_heuristic,
                  solve_lp_relaxation)
from .brute import MAX_BINARIES, ModelTooLargeError, brute_force
from .lpformat import export_lp, lp_text
from .simplex import LPError, solve_lp

__all__ = [
    "Solution", "SolveConfig", "branch_and_bound", "envelope_rows", "relative_gap", "rounding_heuristic",
    "solve_lp_relaxation", "MAX_BINARIES", "ModelTooLargeError", "brute_force", "export_lp",
    "lp_text", "LPError", "solve_lp",
]
