"""minilp: a tiny exact LP solver with harness-protocol output."""

from .lp import (LpProblem, LpVerdict, MAX_CONSTRAINTS, MAX_VARIABLES,
                 solve_lp)
from .protocol import emit_result, format_objective, format_result

__all__ = [
    "LpProblem", "LpVerdict", "MAX_CONSTRAINTS", "MAX_VARIABLES",
    "emit_result", "format_objective", "format_result", "solve_lp",
]
