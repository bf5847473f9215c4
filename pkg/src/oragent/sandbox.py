"""Isolated execution of generated solver programs.

Each execution gets a fresh temporary directory, runs the program as
``python solution.py`` in its own process group, and is killed as a
whole group on timeout so grandchildren cannot linger. Streams are
captured to files with only bounded tails kept in memory. The program
reports its verdict through a tiny stdout protocol::

    OPTIMAL_VALUE=<number>
    MODEL_STATUS=INFEASIBLE
    MODEL_STATUS=UNBOUNDED

Markers count only at the start of a line; when a program prints
several, the last one wins, and an optimal value takes priority over a
status marker. Markers are read only from runs that exit 0.
"""

from __future__ import annotations

import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

SCRIPT_NAME = "solution.py"

# Token substituted for the temporary directory path in captured
# output, so tracebacks read the same across runs.
SANDBOX_PATH_TOKEN = "<sandbox>"

OPTIMAL_VALUE_RE = re.compile(
    r"^OPTIMAL_VALUE=(-?[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)\s*$")
MODEL_STATUS_RE = re.compile(r"^MODEL_STATUS=(INFEASIBLE|UNBOUNDED)\s*$")

# Execution failures, as opposed to runs that completed but reported an
# unsolvable model.
EXEC_FAILURE_KINDS = frozenset(
    {"spawn_failure", "nonzero_exit", "timeout", "protocol_missing"})
MODEL_VERDICT_KINDS = frozenset({"model_infeasible", "model_unbounded"})
ERROR_KINDS = EXEC_FAILURE_KINDS | MODEL_VERDICT_KINDS


@dataclass(frozen=True)
class SandboxLimits:
    wall_timeout: float = 60.0
    max_captured_output: int = 262144  # per stream, bytes
    kill_grace: float = 5.0

    def __post_init__(self) -> None:
        if self.wall_timeout <= 0:
            raise ValueError("wall_timeout must be positive")
        if self.max_captured_output < 1:
            raise ValueError("max_captured_output must be >= 1")


@dataclass(frozen=True)
class Solution:
    """A successfully reported optimum."""

    objective: float
    status_line: str


@dataclass(frozen=True)
class ErrorReport:
    """Why an execution produced no optimum.

    kind is one of spawn_failure, nonzero_exit, timeout,
    protocol_missing (execution failures), or model_infeasible,
    model_unbounded (the program ran fine and reported an unsolvable
    model). exit_code is None exactly for spawn_failure and timeout.
    """

    kind: str
    exit_code: int | None
    stderr_excerpt: str
    stdout_excerpt: str

    def __post_init__(self) -> None:
        if self.kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.kind!r}")
        if self.kind in ("spawn_failure", "timeout"):
            if self.exit_code is not None:
                raise ValueError(f"{self.kind} cannot carry an exit code")
        elif self.kind == "nonzero_exit":
            if self.exit_code is None or self.exit_code == 0:
                raise ValueError("nonzero_exit requires a nonzero exit code")


@dataclass(frozen=True)
class ExecutionOutcome:
    """Exactly one of result and error is set."""

    result: Solution | None
    error: ErrorReport | None
    wall_time: float

    def __post_init__(self) -> None:
        if (self.result is None) == (self.error is None):
            raise ValueError("exactly one of result and error must be set")

    @property
    def ok(self) -> bool:
        return self.error is None


def parse_result(stdout_text: str) -> Solution | ErrorReport:
    """Read the protocol markers from a clean run's stdout.

    Precondition: the program exited 0. Last marker of each kind wins;
    a reported optimum takes priority over a status marker. No marker
    at all is a protocol_missing failure, exit code 0.
    """
    last_solution: Solution | None = None
    last_status: str | None = None
    for line in stdout_text.splitlines():
        m = OPTIMAL_VALUE_RE.match(line)
        if m:
            last_solution = Solution(objective=float(m.group(1)),
                                     status_line=line.rstrip())
            continue
        m = MODEL_STATUS_RE.match(line)
        if m:
            last_status = m.group(1)
    if last_solution is not None:
        return last_solution
    if last_status == "INFEASIBLE":
        return ErrorReport("model_infeasible", 0, "", "")
    if last_status == "UNBOUNDED":
        return ErrorReport("model_unbounded", 0, "", "")
    return ErrorReport("protocol_missing", 0, "", "")


def _read_tail(path: Path, budget: int) -> str:
    """Read at most ``budget`` bytes from the end of a capture file.

    When truncated, the partial first line is dropped so the excerpt
    starts on a line boundary.
    """
    try:
        size = path.stat().st_size
    except OSError:
        return ""
    truncated = size > budget
    with path.open("rb") as fh:
        if truncated:
            fh.seek(size - budget)
        data = fh.read(budget)
    text = data.decode("utf-8", errors="replace")
    if truncated:
        newline_at = text.find("\n")
        text = text[newline_at + 1:] if newline_at >= 0 else ""
    return text


class Sandbox:
    """Runs code artifacts in throwaway working directories.

    extra_pythonpath, when set, is prepended to the child's PYTHONPATH;
    this is how a test-fixture solver package is made importable
    without installing it. keep_artifacts leaves the working
    directories behind for debugging.
    """

    def __init__(self, limits: SandboxLimits | None = None, *,
                 interpreter: Sequence[str] | None = None,
                 extra_pythonpath: str | None = None,
                 keep_artifacts: bool = False,
                 artifact_root: str | Path | None = None) -> None:
        self.limits = limits or SandboxLimits()
        self.interpreter = tuple(interpreter) if interpreter else (sys.executable,)
        # children run from a throwaway directory, so a relative entry
        # would point at nothing there
        self.extra_pythonpath = (os.path.abspath(extra_pythonpath)
                                 if extra_pythonpath else None)
        self.keep_artifacts = keep_artifacts
        self.artifact_root = Path(artifact_root) if artifact_root else None

    def execute(self, code) -> ExecutionOutcome:
        """Run one artifact (anything with a ``source`` attribute)."""
        started = time.monotonic()
        try:
            if self.artifact_root is not None:
                self.artifact_root.mkdir(parents=True, exist_ok=True)
            workdir = Path(tempfile.mkdtemp(
                prefix="oragent-exec-", dir=self.artifact_root))
        except OSError as exc:
            return ExecutionOutcome(
                result=None,
                error=ErrorReport("spawn_failure", None,
                                  f"could not create working directory: {exc}",
                                  ""),
                wall_time=time.monotonic() - started)
        try:
            return self._run_in(workdir, code.source, started)
        finally:
            if not self.keep_artifacts:
                shutil.rmtree(workdir, ignore_errors=True)

    def _run_in(self, workdir: Path, source: str,
                started: float) -> ExecutionOutcome:
        script = workdir / SCRIPT_NAME
        script.write_text(source if source.endswith("\n") else source + "\n",
                          encoding="utf-8")
        out_path = workdir / "stdout.log"
        err_path = workdir / "stderr.log"

        env = os.environ.copy()
        if self.extra_pythonpath:
            existing = env.get("PYTHONPATH")
            env["PYTHONPATH"] = (self.extra_pythonpath + os.pathsep + existing
                                 if existing else self.extra_pythonpath)

        timed_out = False
        try:
            with out_path.open("wb") as out_fh, err_path.open("wb") as err_fh:
                proc = subprocess.Popen(
                    [*self.interpreter, SCRIPT_NAME],
                    cwd=workdir, stdout=out_fh, stderr=err_fh,
                    stdin=subprocess.DEVNULL, env=env,
                    start_new_session=True)
                try:
                    proc.wait(timeout=self.limits.wall_timeout)
                except subprocess.TimeoutExpired:
                    timed_out = True
                    self._kill_group(proc)
        except (OSError, ValueError) as exc:
            return ExecutionOutcome(
                result=None,
                error=ErrorReport("spawn_failure", None,
                                  f"could not start interpreter: {exc}", ""),
                wall_time=time.monotonic() - started)

        wall = time.monotonic() - started
        budget = self.limits.max_captured_output
        stdout_text = self._normalize(workdir, _read_tail(out_path, budget))
        stderr_text = self._normalize(workdir, _read_tail(err_path, budget))

        if timed_out:
            return ExecutionOutcome(
                result=None,
                error=ErrorReport("timeout", None, stderr_text, stdout_text),
                wall_time=wall)
        if proc.returncode != 0:
            return ExecutionOutcome(
                result=None,
                error=ErrorReport("nonzero_exit", proc.returncode,
                                  stderr_text, stdout_text),
                wall_time=wall)

        parsed = parse_result(stdout_text)
        if isinstance(parsed, Solution):
            return ExecutionOutcome(result=parsed, error=None, wall_time=wall)
        return ExecutionOutcome(
            result=None,
            error=replace(parsed, stderr_excerpt=stderr_text,
                          stdout_excerpt=stdout_text),
            wall_time=wall)

    def _kill_group(self, proc: subprocess.Popen) -> None:
        # The child leads its own session, so killing the group takes
        # down any grandchildren it spawned.
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError, OSError):
            pass
        try:
            proc.wait(timeout=self.limits.kill_grace)
        except subprocess.TimeoutExpired:
            pass

    @staticmethod
    def _normalize(workdir: Path, text: str) -> str:
        # Tracebacks embed the absolute script path; rewrite both the
        # raw and resolved directory forms so the excerpt is stable
        # across runs.
        for form in {str(workdir), os.path.realpath(workdir)}:
            text = text.replace(form, SANDBOX_PATH_TOKEN)
        return text
