"""Scoring and reporting for benchmark runs.

A predicted optimum counts as correct when its absolute error against
the ground truth is strictly below the tolerance (default 0.1).
Three headline metrics come out of a run: accuracy over labeled
problems, the rate of final-attempt execution failures, and accuracy
restricted to runs whose program at least reached a solver verdict.
Aggregate tables are computed in decimal arithmetic and rendered to
two places with banker's rounding, so printed means match what a
reader would compute from the printed cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Iterable, Sequence

from .corpus import Corpus
from .loop import RunRecord
from .sandbox import EXEC_FAILURE_KINDS

DEFAULT_TOLERANCE = 0.1

_TWO_PLACES = Decimal("0.01")


class EvaluationError(Exception):
    """Records and corpus do not line up, or inputs are unusable."""


@dataclass(frozen=True)
class JudgeConfig:
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self) -> None:
        if not math.isfinite(self.tolerance) or self.tolerance <= 0:
            raise ValueError("tolerance must be finite and positive")


def judge(predicted: float, truth: float,
          config: JudgeConfig = JudgeConfig()) -> bool:
    """Strict absolute-error test: |predicted - truth| < tolerance.

    Symmetric in sign of the error; an error exactly equal to the
    tolerance fails.
    """
    if not math.isfinite(predicted) or not math.isfinite(truth):
        return False
    return abs(predicted - truth) < config.tolerance


@dataclass(frozen=True)
class FractionMetric:
    """A ratio with its counts kept for reporting."""

    numerator: int
    denominator: int

    @property
    def value(self) -> float:
        if self.denominator == 0:
            return 0.0
        return self.numerator / self.denominator


@dataclass(frozen=True)
class MetricsReport:
    accuracy: FractionMetric
    code_error_rate: FractionMetric
    math_model_accuracy: FractionMetric
    total_records: int
    unlabeled: int
    warnings: tuple[str, ...]


def _truth_map(records: Sequence[RunRecord], corpus: Corpus) -> dict[str, float | None]:
    problems = corpus.by_id()
    truths: dict[str, float | None] = {}
    for record in records:
        problem = problems.get(record.problem_id)
        if problem is None:
            raise EvaluationError(
                f"record {record.problem_id!r} has no corpus entry")
        truths[record.problem_id] = problem.ground_truth
    return truths


def _reached_verdict(record: RunRecord) -> bool:
    """Did the final program at least produce a solver verdict?

    True for solved runs and for runs whose last failure was a model
    verdict (infeasible/unbounded) rather than an execution failure.
    """
    if record.solved:
        return True
    return record.final_error.kind not in EXEC_FAILURE_KINDS


def accuracy(records: Sequence[RunRecord], corpus: Corpus,
             config: JudgeConfig = JudgeConfig()) -> tuple[FractionMetric, list[str]]:
    """Correct answers over labeled problems.

    Unlabeled problems are excluded from the denominator, each with a
    warning so the exclusion is visible in reports.
    """
    truths = _truth_map(records, corpus)
    warnings: list[str] = []
    labeled = 0
    correct = 0
    for record in records:
        truth = truths[record.problem_id]
        if truth is None:
            warnings.append(
                f"{record.problem_id}: no ground truth; excluded from accuracy")
            continue
        labeled += 1
        if record.solved and judge(record.final_objective, truth, config):
            correct += 1
    if labeled == 0:
        warnings.append("no labeled problems; accuracy reported as 0")
    return FractionMetric(correct, labeled), warnings


def code_error_rate(records: Sequence[RunRecord]) -> FractionMetric:
    """Runs whose final attempt was still an execution failure.

    Model verdicts (infeasible/unbounded) do not count: the program ran
    and reported something, it just was not an optimum.
    """
    failing = sum(
        1 for r in records
        if r.final_error is not None
        and r.final_error.kind in EXEC_FAILURE_KINDS)
    return FractionMetric(failing, len(records))


def math_model_accuracy(records: Sequence[RunRecord], corpus: Corpus,
                        config: JudgeConfig = JudgeConfig()
                        ) -> tuple[FractionMetric, list[str]]:
    """Correct answers among labeled runs that reached a solver verdict.

    Execution failures are excluded from the denominator: when the
    program never ran to a verdict, the model behind it was never
    actually tested.
    """
    truths = _truth_map(records, corpus)
    warnings: list[str] = []
    runnable = 0
    correct = 0
    for record in records:
        if not _reached_verdict(record):
            continue
        truth = truths[record.problem_id]
        if truth is None:
            warnings.append(
                f"{record.problem_id}: no ground truth; excluded from "
                "model accuracy")
            continue
        runnable += 1
        if record.solved and judge(record.final_objective, truth, config):
            correct += 1
    return FractionMetric(correct, runnable), warnings


def build_report(records: Sequence[RunRecord], corpus: Corpus,
                 config: JudgeConfig = JudgeConfig()) -> MetricsReport:
    acc, acc_warnings = accuracy(records, corpus, config)
    mma, mma_warnings = math_model_accuracy(records, corpus, config)
    truths = _truth_map(records, corpus)
    unlabeled = sum(1 for t in truths.values() if t is None)
    return MetricsReport(
        accuracy=acc,
        code_error_rate=code_error_rate(records),
        math_model_accuracy=mma,
        total_records=len(records),
        unlabeled=unlabeled,
        warnings=tuple(acc_warnings) + tuple(mma_warnings))


def render_report(report: MetricsReport) -> str:
    def line(label: str, metric: FractionMetric, unit: str) -> str:
        return (f"{label:<22}{render_2dp(Decimal(100) * _ratio(metric)):>8}%"
                f"  ({metric.numerator}/{metric.denominator} {unit})")

    rows = [
        line("accuracy", report.accuracy, "labeled"),
        line("code error rate", report.code_error_rate, "records"),
        line("model accuracy", report.math_model_accuracy, "runnable"),
        f"records evaluated     {report.total_records:>8}",
    ]
    if report.unlabeled:
        rows.append(f"unlabeled (excluded)  {report.unlabeled:>8}")
    for warning in report.warnings:
        rows.append(f"warning: {warning}")
    return "\n".join(rows)


def report_to_dict(report: MetricsReport, config: JudgeConfig) -> dict:
    def frac(metric: FractionMetric) -> dict:
        return {"value": metric.value, "numerator": metric.numerator,
                "denominator": metric.denominator}

    return {
        "accuracy": frac(report.accuracy),
        "code_error_rate": frac(report.code_error_rate),
        "math_model_accuracy": frac(report.math_model_accuracy),
        "total_records": report.total_records,
        "unlabeled": report.unlabeled,
        "tolerance": config.tolerance,
        "warnings": list(report.warnings),
    }


def _ratio(metric: FractionMetric) -> Decimal:
    if metric.denominator == 0:
        return Decimal(0)
    return Decimal(metric.numerator) / Decimal(metric.denominator)


def _to_decimal(value: float | int | str | Decimal) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        # Go through the shortest decimal repr so 1.22 stays 1.22.
        return Decimal(str(value))
    return Decimal(value)


def render_2dp(value: float | int | str | Decimal) -> str:
    """Render to exactly two decimal places, ties to even."""
    return str(_to_decimal(value).quantize(_TWO_PLACES,
                                           rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class MetricCell:
    """One table cell: a group's score on one column."""

    group: str
    column: str
    value: Decimal

    @classmethod
    def of(cls, group: str, column: str,
           value: float | int | str | Decimal) -> "MetricCell":
        return cls(group=group, column=column, value=_to_decimal(value))


@dataclass(frozen=True)
class AggregateReport:
    """Per-group means plus the gap between the first two groups.

    Means are unweighted over each group's cells, computed exactly in
    decimal; gap is first group's mean minus the second's and is None
    unless there are exactly two groups.
    """

    means: tuple[tuple[str, Decimal], ...]
    gap: Decimal | None

    def mean_of(self, group: str) -> Decimal:
        for name, value in self.means:
            if name == group:
                return value
        raise KeyError(group)


def aggregate(cells: Iterable[MetricCell]) -> AggregateReport:
    groups: dict[str, list[Decimal]] = {}
    for cell in cells:
        groups.setdefault(cell.group, []).append(cell.value)
    if not groups:
        raise EvaluationError("no cells to aggregate")
    means = tuple(
        (name, sum(values, Decimal(0)) / Decimal(len(values)))
        for name, values in groups.items())
    gap = means[0][1] - means[1][1] if len(means) == 2 else None
    return AggregateReport(means=means, gap=gap)


def render_aggregate(report: AggregateReport) -> str:
    rows = [f"{name:<28}{render_2dp(value):>10}"
            for name, value in report.means]
    if report.gap is not None:
        rows.append(f"{'gap':<28}{render_2dp(report.gap):>10}")
    return "\n".join(rows)
