"""Shared test helpers: scripted gateway/sandbox doubles, a local
scripted chat-completions server, and repo fixture paths."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from oragent.agents import CodeArtifact
from oragent.gateway import (CompletionResult, GenerationConfig, Transcript,
                             strip_reasoning, transcript_key)
from oragent.sandbox import ErrorReport, ExecutionOutcome, Solution

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"
RUNTIME_SRC = REPO_ROOT / "solver_runtime" / "src"
SCRIPTS = REPO_ROOT / "scripts"

FIXTURE_CORPUS = FIXTURES / "corpus5.jsonl"
REPLAY_PLAIN = FIXTURES / "replay_plain"
REPLAY_RUNTIME = FIXTURES / "replay_runtime"
PROTOCOL_VECTORS = FIXTURES / "protocol_vectors.jsonl"

GEN_CONFIG = GenerationConfig(model_id="test-model", temperature=0.0)


class ScriptedGateway:
    """Gateway double: routes each validated transcript to a canned
    raw response and keeps the call history."""

    def __init__(self, route) -> None:
        self.route = route
        self.calls: list[Transcript] = []

    def complete(self, transcript: Transcript,
                 config: GenerationConfig) -> CompletionResult:
        transcript.validate_for_completion()
        self.calls.append(transcript)
        raw = self.route(transcript)
        reasoning, answer = strip_reasoning(raw)
        return CompletionResult(answer_text=answer, reasoning_text=reasoning,
                                raw_text=raw, usage=None)


def route_by_stage(math="model body", code="```\nprint(1)\n```",
                   code_repair="```\nprint(2)\n```",
                   math_repair="```\nprint(3)\n```",
                   direct="```\nprint(0)\n```"):
    """Router keyed on distinctive phrases of the default templates."""

    def route(transcript: Transcript) -> str:
        text = transcript.messages[-1].content
        if "Build the mathematical model" in text:
            return math
        if "failed when it was executed" in text:
            return code_repair
        if "still fails after earlier repair" in text:
            return math_repair
        if "Solve the following optimization problem" in text:
            return direct
        if "Write a complete Python program" in text:
            return code
        raise AssertionError(f"unroutable prompt: {text[:80]!r}")

    return route


class ScriptedSandbox:
    """Sandbox double that pops pre-planned outcomes in order."""

    def __init__(self, outcomes) -> None:
        self.outcomes = list(outcomes)
        self.executed: list[CodeArtifact] = []

    def execute(self, code: CodeArtifact) -> ExecutionOutcome:
        self.executed.append(code)
        if not self.outcomes:
            raise AssertionError("sandbox executed more often than planned")
        return self.outcomes.pop(0)


def ok_outcome(objective: float = 1.0) -> ExecutionOutcome:
    return ExecutionOutcome(
        result=Solution(objective=objective,
                        status_line=f"OPTIMAL_VALUE={objective:g}"),
        error=None, wall_time=0.0)


def failed_outcome(kind: str = "nonzero_exit", exit_code: int | None = 1,
                   stderr: str = "boom") -> ExecutionOutcome:
    if kind in ("spawn_failure", "timeout"):
        exit_code = None
    if kind in ("protocol_missing", "model_infeasible", "model_unbounded"):
        exit_code = 0
    return ExecutionOutcome(
        result=None,
        error=ErrorReport(kind=kind, exit_code=exit_code,
                          stderr_excerpt=stderr, stdout_excerpt=""),
        wall_time=0.0)


def make_artifact(source: str = "print(1)", *, attempt_index: int = 0,
                  provenance: str = "initial",
                  problem_id: str = "prob") -> CodeArtifact:
    return CodeArtifact(problem_id=problem_id, source=source,
                        attempt_index=attempt_index, provenance=provenance,
                        transcript_key="k" * 64)


class _ScriptedHandler(BaseHTTPRequestHandler):
    def log_message(self, *args) -> None:  # keep test output clean
        pass

    def do_POST(self) -> None:
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        self.server.requests.append(
            {"body": body, "auth": self.headers.get("Authorization")})
        if self.server.plans:
            plan = self.server.plans.pop(0)
        elif self.server.router is not None:
            plan = ("reply", self.server.router(body))
        else:
            plan = ("status", 500, "unplanned request")

        kind = plan[0]
        if kind == "drop":
            self.connection.close()
            return
        if kind == "reply":
            payload = json.dumps({
                "choices": [{"message": {"role": "assistant",
                                         "content": plan[1]}}],
                "usage": {"prompt_tokens": 7, "completion_tokens": 11},
            }).encode("utf-8")
            status = 200
        elif kind == "raw":
            payload = plan[1].encode("utf-8")
            status = 200
        elif kind == "status":
            status, payload = plan[1], plan[2].encode("utf-8")
        else:
            raise AssertionError(f"unknown plan {plan!r}")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture
def scripted_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    server.plans = []
    server.router = None
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server.url = f"http://127.0.0.1:{server.server_address[1]}"
    yield server
    server.shutdown()
    server.server_close()
