"""Run directory layout and persistence.

A run directory is self-describing: it holds the manifest (every knob
that shaped the run), one JSON record per problem under ``records/``,
the raw model responses under ``replay/``, and a copy of the corpus.
Records are written through a canonical JSON encoding (sorted keys,
fixed separators, trailing newline) so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable

from .agents import MathModelDoc
from .loop import AttemptTrace, RunRecord
from .sandbox import ErrorReport, ExecutionOutcome, Solution

RECORD_FORMAT = 1

RECORDS_SUBDIR = "records"
REPLAY_SUBDIR = "replay"
MANIFEST_NAME = "manifest.json"
CORPUS_COPY_NAME = "corpus.jsonl"
EPOCH_TIMESTAMP = "1970-01-01T00:00:00Z"


class RunDirError(Exception):
    """A run directory is missing or malformed."""


def canonical_json_bytes(payload: Any) -> bytes:
    text = json.dumps(payload, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))
    return (text + "\n").encode("utf-8")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def safe_filename(problem_id: str) -> str:
    """Map a problem id onto a filesystem-safe record name."""
    cleaned = "".join(c if c.isalnum() or c in "-_." else "_"
                      for c in problem_id)
    if cleaned != problem_id or not cleaned:
        # Disambiguate ids that collide after cleaning.
        suffix = hashlib.sha256(problem_id.encode("utf-8")).hexdigest()[:8]
        cleaned = f"{cleaned or 'problem'}-{suffix}"
    return cleaned


@dataclass(frozen=True)
class RunManifest:
    """Every input that shaped a run, for reproduction and audit."""

    backend: str
    mode: str
    model_id: str
    temperature: float
    max_output_tokens: int
    max_attempts: int
    timeout_secs: float
    solver_name: str
    tolerance: float
    template_hash: str
    corpus_file: str
    corpus_sha256: str
    workers: int
    interpreter: list[str] | None
    extra_pythonpath: str | None
    started_at: str
    ended_at: str | None
    harness_version: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        names = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - names
        if unknown:
            raise RunDirError(f"manifest has unknown fields: {sorted(unknown)}")
        missing = names - set(data)
        if missing:
            raise RunDirError(f"manifest is missing fields: {sorted(missing)}")
        return cls(**data)


def _solution_to_dict(solution: Solution) -> dict[str, Any]:
    return {"objective": solution.objective,
            "status_line": solution.status_line}


def _error_to_dict(error: ErrorReport) -> dict[str, Any]:
    return {"kind": error.kind, "exit_code": error.exit_code,
            "stderr_excerpt": error.stderr_excerpt,
            "stdout_excerpt": error.stdout_excerpt}


def _outcome_to_dict(outcome: ExecutionOutcome) -> dict[str, Any]:
    return {
        "result": None if outcome.result is None
        else _solution_to_dict(outcome.result),
        "error": None if outcome.error is None
        else _error_to_dict(outcome.error),
        "wall_time": outcome.wall_time,
    }


def _outcome_from_dict(data: dict[str, Any]) -> ExecutionOutcome:
    result = data.get("result")
    error = data.get("error")
    return ExecutionOutcome(
        result=None if result is None else Solution(**result),
        error=None if error is None else ErrorReport(**error),
        wall_time=data["wall_time"])


def record_to_dict(record: RunRecord) -> dict[str, Any]:
    return {
        "format": RECORD_FORMAT,
        "problem_id": record.problem_id,
        "mode": record.mode,
        "model_id": record.model_id,
        "math_doc": None if record.math_doc is None else {
            "problem_id": record.math_doc.problem_id,
            "body": record.math_doc.body,
            "transcript_key": record.math_doc.transcript_key,
        },
        "attempts": [
            {
                "attempt": a.attempt,
                "code_id": a.code_id,
                "provenance": a.provenance,
                "transcript_key": a.transcript_key,
                "outcome": _outcome_to_dict(a.outcome),
                "repair_applied_after": a.repair_applied_after,
            }
            for a in record.attempts
        ],
        "final_objective": record.final_objective,
        "final_error": None if record.final_error is None
        else _error_to_dict(record.final_error),
        "total_wall_time": record.total_wall_time,
    }


def record_from_dict(data: dict[str, Any]) -> RunRecord:
    math_doc = data.get("math_doc")
    final_error = data.get("final_error")
    return RunRecord(
        problem_id=data["problem_id"],
        mode=data["mode"],
        model_id=data["model_id"],
        math_doc=None if math_doc is None else MathModelDoc(**math_doc),
        attempts=tuple(
            AttemptTrace(
                attempt=a["attempt"],
                code_id=a["code_id"],
                provenance=a["provenance"],
                transcript_key=a["transcript_key"],
                outcome=_outcome_from_dict(a["outcome"]),
                repair_applied_after=a["repair_applied_after"],
            )
            for a in data["attempts"]
        ),
        final_objective=data.get("final_objective"),
        final_error=None if final_error is None
        else ErrorReport(**final_error),
        total_wall_time=data["total_wall_time"])


def normalized_record_dict(data: dict[str, Any]) -> dict[str, Any]:
    """Copy of a record dict with all wall times zeroed.

    Lets runs with real clocks be compared for decision equivalence.
    """
    clone = json.loads(json.dumps(data))
    clone["total_wall_time"] = 0.0
    for attempt in clone.get("attempts", []):
        attempt["outcome"]["wall_time"] = 0.0
    return clone


class RunDirectory:
    """Filesystem handle for one run's artifacts."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    @property
    def records_dir(self) -> Path:
        return self.root / RECORDS_SUBDIR

    @property
    def replay_dir(self) -> Path:
        return self.root / REPLAY_SUBDIR

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    @property
    def corpus_path(self) -> Path:
        return self.root / CORPUS_COPY_NAME

    def create(self) -> "RunDirectory":
        self.records_dir.mkdir(parents=True, exist_ok=True)
        self.replay_dir.mkdir(parents=True, exist_ok=True)
        return self

    def write_manifest(self, manifest: RunManifest) -> None:
        self.manifest_path.write_bytes(
            canonical_json_bytes(manifest.to_dict()))

    def read_manifest(self) -> RunManifest:
        if not self.manifest_path.is_file():
            raise RunDirError(f"{self.root}: no manifest; not a run directory")
        with self.manifest_path.open(encoding="utf-8") as fh:
            return RunManifest.from_dict(json.load(fh))

    def copy_corpus(self, corpus_file: Path) -> None:
        if not self.corpus_path.exists():
            self.corpus_path.write_bytes(corpus_file.read_bytes())

    def record_path(self, problem_id: str) -> Path:
        return self.records_dir / f"{safe_filename(problem_id)}.json"

    def write_record(self, record: RunRecord) -> None:
        self.records_dir.mkdir(parents=True, exist_ok=True)
        path = self.record_path(record.problem_id)
        path.write_bytes(canonical_json_bytes(record_to_dict(record)))

    def has_record(self, problem_id: str) -> bool:
        return self.record_path(problem_id).is_file()

    def load_record_dicts(self) -> list[dict[str, Any]]:
        if not self.records_dir.is_dir():
            return []
        dicts = []
        for path in sorted(self.records_dir.glob("*.json")):
            with path.open(encoding="utf-8") as fh:
                try:
                    dicts.append(json.load(fh))
                except json.JSONDecodeError as exc:
                    raise RunDirError(f"{path}: corrupt record: {exc.msg}")
        return dicts

    def load_records(self) -> list[RunRecord]:
        return [record_from_dict(d) for d in self.load_record_dicts()]


def order_records(records: Iterable[RunRecord],
                  corpus_ids: Iterable[str]) -> list[RunRecord]:
    """Arrange records in corpus order, dropping ids not in the corpus."""
    by_id = {r.problem_id: r for r in records}
    return [by_id[pid] for pid in corpus_ids if pid in by_id]
