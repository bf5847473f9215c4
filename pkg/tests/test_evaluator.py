"""Scoring: the judge, headline metrics, decimal aggregation."""

import math
import random
from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from oragent.corpus import Corpus, ProblemInstance
from oragent.evaluator import (AggregateReport, DEFAULT_TOLERANCE,
                               EvaluationError, FractionMetric, JudgeConfig,
                               MetricCell, accuracy, aggregate, build_report,
                               code_error_rate, judge, math_model_accuracy,
                               render_2dp, render_aggregate, render_report,
                               report_to_dict)
from oragent.loop import AttemptTrace, RunRecord

from conftest import failed_outcome, ok_outcome


def make_record(problem_id: str, objective: float | None = None, *,
                fail_kind: str = "nonzero_exit",
                attempts_before: int = 0) -> RunRecord:
    """A record that failed `attempts_before` times, then solved with
    `objective` (or gave up with `fail_kind` when objective is None)."""
    attempts = []
    for i in range(attempts_before):
        attempts.append(AttemptTrace(
            attempt=i + 1, code_id="c", provenance="initial",
            transcript_key="k", outcome=failed_outcome(),
            repair_applied_after="code_repair"))
    final_attempt = len(attempts) + 1
    if objective is not None:
        outcome = ok_outcome(objective)
        attempts.append(AttemptTrace(
            attempt=final_attempt, code_id="c", provenance="initial",
            transcript_key="k", outcome=outcome,
            repair_applied_after="none"))
        return RunRecord(problem_id=problem_id, mode="full", model_id="m",
                         math_doc=None, attempts=tuple(attempts),
                         final_objective=objective, final_error=None,
                         total_wall_time=0.0)
    outcome = failed_outcome(fail_kind)
    attempts.append(AttemptTrace(
        attempt=final_attempt, code_id="c", provenance="initial",
        transcript_key="k", outcome=outcome, repair_applied_after="give_up"))
    return RunRecord(problem_id=problem_id, mode="full", model_id="m",
                     math_doc=None, attempts=tuple(attempts),
                     final_objective=None, final_error=outcome.error,
                     total_wall_time=0.0)


def corpus_for(truths: dict[str, float | None]) -> Corpus:
    problems = tuple(
        ProblemInstance(id=pid, description=f"problem {pid}",
                        ground_truth=truth)
        for pid, truth in truths.items())
    return Corpus(name="test", problems=problems)


class TestJudge:
    def test_error_equal_to_tolerance_is_incorrect(self):
        # truth 0 keeps the subtraction exact, so the error is exactly
        # the tolerance
        assert not judge(DEFAULT_TOLERANCE, 0.0)
        assert not judge(-DEFAULT_TOLERANCE, 0.0)

    def test_error_just_inside_tolerance_is_correct(self):
        assert judge(DEFAULT_TOLERANCE - 1e-9, 0.0)
        assert judge(math.nextafter(DEFAULT_TOLERANCE, 0.0), 0.0)

    def test_exact_match(self):
        assert judge(36.0, 36.0)

    def test_sign_symmetry_over_random_pairs(self):
        rng = random.Random(20240814)
        for _ in range(1000):
            truth = rng.uniform(-1e4, 1e4)
            err = rng.uniform(0, 0.5)
            assert judge(truth + err, truth) == judge(truth - err, truth)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite_is_never_correct(self, bad):
        assert not judge(bad, 1.0)
        assert not judge(1.0, bad)

    def test_custom_tolerance(self):
        wide = JudgeConfig(tolerance=5.0)
        assert judge(14.0, 10.0, wide)
        assert not judge(15.0, 10.0, wide)

    @pytest.mark.parametrize("tolerance", [0.0, -0.1, math.nan, math.inf])
    def test_bad_tolerance_rejected(self, tolerance):
        with pytest.raises(ValueError):
            JudgeConfig(tolerance=tolerance)

    @given(st.floats(-1e6, 1e6), st.floats(0, 10))
    def test_judgement_depends_only_on_absolute_error(self, truth, err):
        assert judge(truth + err, truth) == judge(truth - err, truth)


class TestFractionMetric:
    def test_value(self):
        assert FractionMetric(3, 4).value == 0.75

    def test_zero_denominator_is_zero_not_crash(self):
        assert FractionMetric(0, 0).value == 0.0


class TestAccuracy:
    def test_counts_only_labeled(self):
        corpus = corpus_for({"p1": 36.0, "p2": 20.0, "p3": None})
        records = [make_record("p1", 36.0), make_record("p2", 99.0),
                   make_record("p3", 5.0)]
        metric, warnings = accuracy(records, corpus)
        assert (metric.numerator, metric.denominator) == (1, 2)
        assert any("p3" in w for w in warnings)

    def test_failed_runs_count_against_accuracy(self):
        corpus = corpus_for({"p1": 36.0})
        metric, _ = accuracy([make_record("p1")], corpus)
        assert (metric.numerator, metric.denominator) == (0, 1)

    def test_no_labels_warns(self):
        corpus = corpus_for({"p1": None})
        metric, warnings = accuracy([make_record("p1", 1.0)], corpus)
        assert metric.denominator == 0 and metric.value == 0.0
        assert any("no labeled problems" in w for w in warnings)

    def test_unknown_record_is_an_error(self):
        corpus = corpus_for({"p1": 36.0})
        with pytest.raises(EvaluationError, match="ghost"):
            accuracy([make_record("ghost", 1.0)], corpus)


class TestCodeErrorRate:
    def test_counts_final_attempt_failures_only(self):
        records = [
            make_record("p1", 36.0, attempts_before=2),  # recovered
            make_record("p2", fail_kind="timeout"),
            make_record("p3", fail_kind="model_infeasible"),  # verdict, not a code error
            make_record("p4", fail_kind="protocol_missing"),
        ]
        metric = code_error_rate(records)
        assert (metric.numerator, metric.denominator) == (2, 4)

    @pytest.mark.parametrize("kind", ["spawn_failure", "nonzero_exit",
                                      "timeout", "protocol_missing"])
    def test_every_execution_failure_kind_counts(self, kind):
        metric = code_error_rate([make_record("p1", fail_kind=kind)])
        assert metric.numerator == 1

    @pytest.mark.parametrize("kind", ["model_infeasible", "model_unbounded"])
    def test_model_verdicts_do_not_count(self, kind):
        metric = code_error_rate([make_record("p1", fail_kind=kind)])
        assert metric.numerator == 0

    def test_empty_is_zero(self):
        assert code_error_rate([]).value == 0.0


class TestMathModelAccuracy:
    def test_execution_failures_leave_the_denominator(self):
        corpus = corpus_for({"p1": 36.0, "p2": 20.0, "p3": 5.0})
        records = [
            make_record("p1", 36.0),
            make_record("p2", fail_kind="timeout"),  # never reached a verdict
            make_record("p3", fail_kind="model_infeasible"),  # wrong model
        ]
        metric, _ = math_model_accuracy(records, corpus)
        assert (metric.numerator, metric.denominator) == (1, 2)

    def test_unlabeled_runnable_records_warn(self):
        corpus = corpus_for({"p1": None})
        metric, warnings = math_model_accuracy([make_record("p1", 1.0)],
                                               corpus)
        assert metric.denominator == 0
        assert any("p1" in w for w in warnings)


class TestReport:
    def test_build_report_assembles_all_metrics(self):
        corpus = corpus_for({"p1": 36.0, "p2": 20.0, "p3": None})
        records = [make_record("p1", 36.0),
                   make_record("p2", fail_kind="timeout"),
                   make_record("p3", 7.0)]
        report = build_report(records, corpus)
        assert report.accuracy.value == 0.5
        assert (report.code_error_rate.numerator,
                report.code_error_rate.denominator) == (1, 3)
        assert report.total_records == 3
        assert report.unlabeled == 1

    def test_render_report_shows_percentages_and_counts(self):
        corpus = corpus_for({"p1": 36.0, "p2": 20.0})
        records = [make_record("p1", 36.0),
                   make_record("p2", fail_kind="timeout")]
        text = render_report(build_report(records, corpus))
        assert "accuracy" in text and "50.00%" in text
        assert "(1/2 labeled)" in text
        assert "(1/2 records)" in text

    def test_report_to_dict_is_json_ready(self):
        corpus = corpus_for({"p1": 36.0})
        config = JudgeConfig(tolerance=0.25)
        data = report_to_dict(build_report([make_record("p1", 36.0)],
                                           corpus, config), config)
        assert data["accuracy"]["value"] == 1.0
        assert data["accuracy"]["denominator"] == 1
        assert data["tolerance"] == 0.25
        assert data["warnings"] == []


class TestRendering:
    @pytest.mark.parametrize("value,expected", [
        (0.525, "0.52"),      # tie goes to the even digit
        (0.125, "0.12"),
        (0.135, "0.14"),
        (-4.035, "-4.04"),
        (1.22, "1.22"),
        (0, "0.00"),
        ("4.5646", "4.56"),
        (Decimal("2.675"), "2.68"),
    ])
    def test_two_place_half_even(self, value, expected):
        assert render_2dp(value) == expected

    def test_float_values_keep_their_printed_form(self):
        # 1.22 is not exactly representable; rounding must still act on
        # the printed value, not the binary expansion
        assert render_2dp(1.005) == "1.00"


class TestAggregate:
    def test_means_are_exact_decimals(self):
        cells = [MetricCell.of("a", "c1", 0.5), MetricCell.of("a", "c2", 0.55),
                 MetricCell.of("b", "c1", 4.0)]
        report = aggregate(cells)
        assert report.mean_of("a") == Decimal("0.525")
        assert report.mean_of("b") == Decimal("4.0")
        assert report.gap == Decimal("0.525") - Decimal("4.0")

    def test_gap_requires_exactly_two_groups(self):
        one = aggregate([MetricCell.of("a", "c", 1)])
        assert one.gap is None
        three = aggregate([MetricCell.of(g, "c", 1) for g in "abc"])
        assert three.gap is None

    def test_empty_aggregation_is_an_error(self):
        with pytest.raises(EvaluationError):
            aggregate([])

    def test_mean_of_unknown_group(self):
        report = aggregate([MetricCell.of("a", "c", 1)])
        with pytest.raises(KeyError):
            report.mean_of("zzz")

    def test_render_aggregate_rounds_half_even(self):
        report = AggregateReport(
            means=(("alpha", Decimal("0.525")), ("beta", Decimal("4.5646"))),
            gap=Decimal("0.525") - Decimal("4.5646"))
        text = render_aggregate(report)
        assert "0.52" in text
        assert "4.56" in text
        assert "-4.04" in text
