"""Exact linear programming by vertex enumeration.

Solves small LPs in rational arithmetic: every candidate vertex is the
intersection of n constraint hyperplanes, so enumerating all
combinations and keeping the best feasible one finds the optimum
without any tolerance tuning. Unboundedness is decided separately by
maximizing the objective over the (boxed) recession cone; any strictly
improving direction proves the problem unbounded.

Enumeration is exponential in the constraint count, which is fine for
the intended scale (at most 8 variables and 16 constraints) and in
exchange buys exactness: results are bit-reproducible and never suffer
from feasibility tolerances.

Variables default to the nonnegative orthant. Problems whose feasible
region has no vertex at all (only possible when default bounds are
overridden with free variables) are outside the supported class and
may be reported as infeasible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

MAX_VARIABLES = 8
MAX_CONSTRAINTS = 16

RELATIONS = ("<=", ">=", "=")
SENSES = ("maximize", "minimize")


def _frac(value) -> Fraction:
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"coefficient is not finite: {value!r}")
        return Fraction(value)
    return Fraction(value)


class LpProblem:
    """A linear program in inequality form.

    objective: per-variable coefficients.
    constraints: (coefficients, relation, bound) triples with relation
        one of ``<=``, ``>=``, ``=``.
    bounds: per-variable (low, high), ``None`` meaning unbounded on
        that side; the default is [0, +inf) for every variable.

    All numbers are converted to exact rationals on construction.
    """

    def __init__(self, objective: Sequence, sense: str = "maximize",
                 constraints: Sequence = (),
                 bounds: Sequence | None = None) -> None:
        self.objective = tuple(_frac(c) for c in objective)
        n = len(self.objective)
        if n == 0:
            raise ValueError("objective needs at least one variable")
        if n > MAX_VARIABLES:
            raise ValueError(
                f"{n} variables exceed the supported maximum of "
                f"{MAX_VARIABLES}")
        if sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}, got {sense!r}")
        self.sense = sense

        parsed = []
        for coeffs, relation, bound in constraints:
            coeffs = tuple(_frac(c) for c in coeffs)
            if len(coeffs) != n:
                raise ValueError(
                    f"constraint has {len(coeffs)} coefficients for "
                    f"{n} variables")
            if relation not in RELATIONS:
                raise ValueError(f"unknown relation {relation!r}")
            parsed.append((coeffs, relation, _frac(bound)))
        if len(parsed) > MAX_CONSTRAINTS:
            raise ValueError(
                f"{len(parsed)} constraints exceed the supported maximum "
                f"of {MAX_CONSTRAINTS}")
        self.constraints = tuple(parsed)

        if bounds is None:
            bounds = [(0, None)] * n
        if len(bounds) != n:
            raise ValueError(f"{len(bounds)} bounds for {n} variables")
        self.bounds = tuple(
            (None if lo is None else _frac(lo),
             None if hi is None else _frac(hi))
            for lo, hi in bounds)

    @property
    def n_variables(self) -> int:
        return len(self.objective)


@dataclass(frozen=True)
class LpVerdict:
    """Outcome of a solve: optimal (with value and point), infeasible,
    or unbounded."""

    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float | None = None
    point: tuple[float, ...] | None = None


def _dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def _hyperplanes(problem: LpProblem) -> list[tuple[tuple[Fraction, ...], Fraction]]:
    """All boundary hyperplanes: one per constraint, one per finite bound."""
    n = problem.n_variables
    planes = [(coeffs, bound) for coeffs, _, bound in problem.constraints]
    for i, (lo, hi) in enumerate(problem.bounds):
        unit = tuple(Fraction(int(j == i)) for j in range(n))
        if lo is not None:
            planes.append((unit, lo))
        if hi is not None:
            planes.append((unit, hi))
    return planes


def _solve_square(planes, combo, n) -> tuple[Fraction, ...] | None:
    """Gaussian elimination on an n x n system; None when singular."""
    rows = [list(planes[i][0]) + [planes[i][1]] for i in combo]
    for col in range(n):
        pivot_row = next(
            (r for r in range(col, n) if rows[r][col] != 0), None)
        if pivot_row is None:
            return None
        rows[col], rows[pivot_row] = rows[pivot_row], rows[col]
        pivot = rows[col][col]
        rows[col] = [v / pivot for v in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [v - factor * p
                           for v, p in zip(rows[r], rows[col])]
    return tuple(rows[i][n] for i in range(n))


def _feasible(problem: LpProblem, point: Sequence[Fraction]) -> bool:
    for coeffs, relation, bound in problem.constraints:
        value = _dot(coeffs, point)
        if relation == "<=" and value > bound:
            return False
        if relation == ">=" and value < bound:
            return False
        if relation == "=" and value != bound:
            return False
    for x, (lo, hi) in zip(point, problem.bounds):
        if lo is not None and x < lo:
            return False
        if hi is not None and x > hi:
            return False
    return True


def _best_vertex(problem: LpProblem
                 ) -> tuple[Fraction, tuple[Fraction, ...]] | None:
    """Best feasible vertex by exhaustive enumeration; None if none."""
    n = problem.n_variables
    planes = _hyperplanes(problem)
    maximize = problem.sense == "maximize"
    best: tuple[Fraction, tuple[Fraction, ...]] | None = None
    for combo in itertools.combinations(range(len(planes)), n):
        point = _solve_square(planes, combo, n)
        if point is None or not _feasible(problem, point):
            continue
        value = _dot(problem.objective, point)
        if best is None or (value > best[0] if maximize else value < best[0]):
            best = (value, point)
    return best


def _recession_problem(problem: LpProblem) -> LpProblem:
    """The recession cone of the feasible region, boxed to [-1, 1].

    Directions d with A d respecting every constraint's homogeneous
    form stay feasible forever; boxing makes the cone a polytope whose
    best vertex tells whether any direction strictly improves the
    objective.
    """
    direction_constraints = [
        (coeffs, relation, 0)
        for coeffs, relation, _ in problem.constraints
    ]
    direction_bounds = []
    for lo, hi in problem.bounds:
        direction_bounds.append((
            Fraction(-1) if lo is None else Fraction(0),
            Fraction(1) if hi is None else Fraction(0),
        ))
    objective = (problem.objective if problem.sense == "maximize"
                 else tuple(-c for c in problem.objective))
    return LpProblem(objective=objective, sense="maximize",
                     constraints=direction_constraints,
                     bounds=direction_bounds)


def solve_lp(problem: LpProblem) -> LpVerdict:
    """Solve exactly; returns optimal, infeasible, or unbounded."""
    best = _best_vertex(problem)
    if best is None:
        return LpVerdict(status="infeasible")
    improving = _best_vertex(_recession_problem(problem))
    if improving is not None and improving[0] > 0:
        return LpVerdict(status="unbounded")
    value, point = best
    return LpVerdict(status="optimal", objective=float(value),
                     point=tuple(float(x) for x in point))
