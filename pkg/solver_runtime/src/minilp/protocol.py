"""Result reporting for sandboxed solver programs.

The harness that runs fixture programs reads their verdict from
stdout: a line ``OPTIMAL_VALUE=<number>`` for an optimum, or
``MODEL_STATUS=INFEASIBLE`` / ``MODEL_STATUS=UNBOUNDED`` otherwise.
Numbers are printed as plain integers when the value is integral and
as Python float repr otherwise, both of which the harness grammar
accepts (decimal or scientific notation).
"""

from __future__ import annotations

import math
import sys

from .lp import LpVerdict


def format_objective(value: float) -> str:
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"objective is not finite: {value!r}")
    if v.is_integer():
        return str(int(v))
    return repr(v)


def format_result(verdict: LpVerdict) -> str:
    if verdict.status == "optimal":
        if verdict.objective is None:
            raise ValueError("optimal verdict without an objective value")
        return f"OPTIMAL_VALUE={format_objective(verdict.objective)}"
    if verdict.status == "infeasible":
        return "MODEL_STATUS=INFEASIBLE"
    if verdict.status == "unbounded":
        return "MODEL_STATUS=UNBOUNDED"
    raise ValueError(f"unknown verdict status {verdict.status!r}")


def emit_result(verdict: LpVerdict, stream=None) -> None:
    print(format_result(verdict), file=stream if stream is not None
          else sys.stdout)
