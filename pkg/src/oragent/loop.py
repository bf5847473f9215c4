"""Pipeline orchestration: staged solving with bounded self-repair.

The full pipeline turns a problem statement into a math model, the
model into a program, and then executes the program up to
``max_attempts`` times. After a failed attempt the repair schedule
decides what happens next: code repair on ordinary attempts, one
model-level reconsideration on the penultimate attempt, and giving up
on the last. Two degenerate modes skip parts of the pipeline: direct
(one prompt straight to code, single execution) and model_code (math
then code, single execution, no repair).
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Sequence

from . import agents
from .agents import (AgentError, CodeArtifact, DEFAULT_PROTOCOL_SPEC,
                     DEFAULT_SOLVER_NAME, MathModelDoc, PromptTemplateSet)
from .corpus import Corpus, ProblemInstance
from .gateway import Gateway, GatewayError, GenerationConfig
from .sandbox import ErrorReport, ExecutionOutcome, Sandbox

if TYPE_CHECKING:
    from .rundir import RunDirectory

logger = logging.getLogger(__name__)

MODES = ("direct", "model_code", "full")

REPAIR_ACTIONS = ("none", "code_repair", "math_repair", "give_up")

DEFAULT_MAX_ATTEMPTS = 5


class PipelineConfigError(Exception):
    """The pipeline was configured inconsistently."""


def decide_repair(attempt: int, max_attempts: int) -> str:
    """Repair schedule for a failed attempt (1-based).

    The last attempt gives up, the penultimate one escalates to a
    model-level repair, and every earlier failure gets a code repair.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if not 1 <= attempt <= max_attempts:
        raise ValueError(
            f"attempt {attempt} out of range 1..{max_attempts}")
    if attempt == max_attempts:
        return "give_up"
    if attempt == max_attempts - 1:
        return "math_repair"
    return "code_repair"


@dataclass(frozen=True)
class AttemptTrace:
    """What happened on one execution attempt.

    code_id hashes the program in effect for the attempt ("" when a
    stage failed before any program existed); repair_applied_after is
    "none" exactly when the attempt succeeded.
    """

    attempt: int
    code_id: str
    provenance: str
    transcript_key: str
    outcome: ExecutionOutcome
    repair_applied_after: str

    def __post_init__(self) -> None:
        if self.repair_applied_after not in REPAIR_ACTIONS:
            raise ValueError(
                f"unknown repair action {self.repair_applied_after!r}")
        if (self.repair_applied_after == "none") != self.outcome.ok:
            raise ValueError(
                "repair_applied_after is 'none' exactly on success")


@dataclass(frozen=True)
class RunRecord:
    """Complete account of one problem's journey through the pipeline.

    Exactly one of final_objective and final_error is set. math_doc is
    present in model_code and full modes whenever the modeling stage
    produced one; a record for a run that failed before modeling
    finished has none.
    """

    problem_id: str
    mode: str
    model_id: str
    math_doc: MathModelDoc | None
    attempts: tuple[AttemptTrace, ...]
    final_objective: float | None
    final_error: ErrorReport | None
    total_wall_time: float

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if (self.final_objective is None) == (self.final_error is None):
            raise ValueError(
                "exactly one of final_objective and final_error must be set")
        if not self.attempts:
            raise ValueError("a run record needs at least one attempt")

    @property
    def solved(self) -> bool:
        return self.final_error is None


@dataclass
class PipelineDeps:
    """Everything a solve needs: gateway, templates, sandbox, knobs.

    deterministic_clock zeroes every recorded wall time; replay runs
    use it so run directories come out byte-identical.
    """

    gateway: Gateway
    templates: PromptTemplateSet
    sandbox: Sandbox
    gen_config: GenerationConfig
    solver_name: str = DEFAULT_SOLVER_NAME
    protocol_spec: str = DEFAULT_PROTOCOL_SPEC
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    deterministic_clock: bool = False

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise PipelineConfigError("max_attempts must be >= 1")


def _synthetic_failure(message: str) -> ExecutionOutcome:
    """Stand-in outcome for attempts that never reached the sandbox."""
    return ExecutionOutcome(
        result=None,
        error=ErrorReport("spawn_failure", None, message, ""),
        wall_time=0.0)


def _clocked(outcome: ExecutionOutcome, deps: PipelineDeps) -> ExecutionOutcome:
    if deps.deterministic_clock and outcome.wall_time != 0.0:
        return replace(outcome, wall_time=0.0)
    return outcome


def _elapsed(started: float, deps: PipelineDeps) -> float:
    return 0.0 if deps.deterministic_clock else time.monotonic() - started


def _finish(problem: ProblemInstance, mode: str, deps: PipelineDeps,
            math_doc: MathModelDoc | None, attempts: list[AttemptTrace],
            started: float) -> RunRecord:
    last = attempts[-1].outcome
    return RunRecord(
        problem_id=problem.id,
        mode=mode,
        model_id=deps.gen_config.model_id,
        math_doc=math_doc,
        attempts=tuple(attempts),
        final_objective=last.result.objective if last.ok else None,
        final_error=last.error,
        total_wall_time=_elapsed(started, deps))


def _stage_failure(problem: ProblemInstance, mode: str, deps: PipelineDeps,
                   math_doc: MathModelDoc | None, exc: Exception,
                   started: float) -> RunRecord:
    outcome = _synthetic_failure(f"pipeline stage failed: {exc}")
    trace = AttemptTrace(attempt=1, code_id="", provenance="none",
                         transcript_key="", outcome=outcome,
                         repair_applied_after="give_up")
    return _finish(problem, mode, deps, math_doc, [trace], started)


def _single_execution(problem: ProblemInstance, mode: str, deps: PipelineDeps,
                      math_doc: MathModelDoc | None, code: CodeArtifact,
                      started: float) -> RunRecord:
    outcome = _clocked(deps.sandbox.execute(code), deps)
    trace = AttemptTrace(
        attempt=1, code_id=code.code_id, provenance=code.provenance,
        transcript_key=code.transcript_key, outcome=outcome,
        repair_applied_after="none" if outcome.ok else "give_up")
    return _finish(problem, mode, deps, math_doc, [trace], started)


def _solve_direct(problem: ProblemInstance, deps: PipelineDeps,
                  started: float) -> RunRecord:
    try:
        code = agents.run_direct_agent(
            problem.id, problem.description, deps.gateway, deps.templates,
            deps.gen_config, solver_name=deps.solver_name,
            protocol_spec=deps.protocol_spec)
    except (AgentError, GatewayError) as exc:
        return _stage_failure(problem, "direct", deps, None, exc, started)
    return _single_execution(problem, "direct", deps, None, code, started)


def _solve_model_code(problem: ProblemInstance, deps: PipelineDeps,
                      started: float) -> RunRecord:
    math_doc = None
    try:
        math_doc = agents.run_math_agent(
            problem.id, problem.description, deps.gateway, deps.templates,
            deps.gen_config)
        code = agents.run_code_agent(
            math_doc, deps.gateway, deps.templates, deps.gen_config,
            solver_name=deps.solver_name, protocol_spec=deps.protocol_spec)
    except (AgentError, GatewayError) as exc:
        return _stage_failure(problem, "model_code", deps, math_doc, exc,
                              started)
    return _single_execution(problem, "model_code", deps, math_doc, code,
                             started)


def _repair(action: str, math_doc: MathModelDoc, code: CodeArtifact,
            error: ErrorReport, deps: PipelineDeps,
            attempt: int) -> CodeArtifact:
    if action == "code_repair":
        return agents.run_code_repair_agent(
            code, error, deps.gateway, deps.templates, deps.gen_config,
            solver_name=deps.solver_name, protocol_spec=deps.protocol_spec,
            attempt_index=attempt)
    return agents.run_math_repair_agent(
        math_doc, code, error, deps.gateway, deps.templates, deps.gen_config,
        solver_name=deps.solver_name, protocol_spec=deps.protocol_spec,
        attempt_index=attempt)


def _solve_full(problem: ProblemInstance, deps: PipelineDeps,
                started: float) -> RunRecord:
    math_doc = None
    try:
        math_doc = agents.run_math_agent(
            problem.id, problem.description, deps.gateway, deps.templates,
            deps.gen_config)
        code = agents.run_code_agent(
            math_doc, deps.gateway, deps.templates, deps.gen_config,
            solver_name=deps.solver_name, protocol_spec=deps.protocol_spec)
    except (AgentError, GatewayError) as exc:
        return _stage_failure(problem, "full", deps, math_doc, exc, started)

    attempts: list[AttemptTrace] = []
    pending_repair_error: str | None = None
    for attempt in range(1, deps.max_attempts + 1):
        if pending_repair_error is None:
            outcome = _clocked(deps.sandbox.execute(code), deps)
        else:
            # The repair agent failed, so there is no new program to
            # run; the attempt is consumed by a synthetic failure and
            # the previous program stays in effect.
            outcome = _synthetic_failure(pending_repair_error)
            pending_repair_error = None

        if outcome.ok:
            attempts.append(AttemptTrace(
                attempt=attempt, code_id=code.code_id,
                provenance=code.provenance,
                transcript_key=code.transcript_key, outcome=outcome,
                repair_applied_after="none"))
            return _finish(problem, "full", deps, math_doc, attempts, started)

        action = decide_repair(attempt, deps.max_attempts)
        attempts.append(AttemptTrace(
            attempt=attempt, code_id=code.code_id,
            provenance=code.provenance, transcript_key=code.transcript_key,
            outcome=outcome, repair_applied_after=action))
        if action == "give_up":
            break
        try:
            code = _repair(action, math_doc, code, outcome.error, deps,
                           attempt)
        except (AgentError, GatewayError) as exc:
            pending_repair_error = f"{action} produced no program: {exc}"
    return _finish(problem, "full", deps, math_doc, attempts, started)


def solve(problem: ProblemInstance, mode: str,
          deps: PipelineDeps) -> RunRecord:
    """Run one problem through the pipeline in the given mode."""
    if mode not in MODES:
        raise PipelineConfigError(f"unknown mode {mode!r}")
    started = time.monotonic()
    if mode == "direct":
        return _solve_direct(problem, deps, started)
    if mode == "model_code":
        return _solve_model_code(problem, deps, started)
    return _solve_full(problem, deps, started)


def run_benchmark(corpus: Corpus, mode: str, deps: PipelineDeps, *,
                  workers: int = 1,
                  run_dir: "RunDirectory | None" = None,
                  on_record: Callable[[RunRecord], None] | None = None
                  ) -> list[RunRecord]:
    """Solve a whole corpus, resuming and persisting per problem.

    Problems that already have a record in the run directory are
    skipped, so an interrupted sweep can be resumed by rerunning the
    same command. One problem's failure never aborts the sweep; a
    crashed solve is recorded as a failed run. Records are written by
    this thread only, and the returned list follows corpus order.
    """
    if workers < 1:
        raise PipelineConfigError("workers must be >= 1")
    results: dict[str, RunRecord] = {}
    if run_dir is not None:
        for record in run_dir.load_records():
            results[record.problem_id] = record
        if results:
            logger.info("resuming: %d records already present", len(results))
    pending = [p for p in corpus if p.id not in results]

    def work(problem: ProblemInstance) -> RunRecord:
        try:
            return solve(problem, mode, deps)
        except Exception as exc:  # defensive: keep the sweep alive
            logger.exception("solve crashed for %s", problem.id)
            started = time.monotonic()
            return _stage_failure(problem, mode, deps, None, exc, started)

    def persist(record: RunRecord) -> None:
        if run_dir is not None:
            run_dir.write_record(record)
        results[record.problem_id] = record
        if on_record is not None:
            on_record(record)

    if workers == 1:
        for problem in pending:
            persist(work(problem))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(work, p) for p in pending]
            for future in as_completed(futures):
                persist(future.result())

    missing = [p.id for p in corpus if p.id not in results]
    if missing:
        raise PipelineConfigError(
            f"benchmark finished without records for {missing}")
    return [results[p.id] for p in corpus]
