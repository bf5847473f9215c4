"""Problem corpus loading, validation, and round-trip serialization.

A corpus is a UTF-8 JSON-lines file. Each line is an object with fields
``id``, ``question``, ``answer``, and ``source``; ``answer`` may be null
or absent for unlabeled problems, and a missing ``id`` is synthesized
from the file name and line number. Blank lines are skipped. Record
order always follows file order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator


class CorpusError(Exception):
    """A corpus file could not be loaded.

    Carries the offending path and, when known, the 1-based line number
    so callers can print an actionable diagnostic.
    """

    def __init__(self, message: str, *, path: Path | None = None,
                 line: int | None = None) -> None:
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = str(path)
            if line is not None:
                prefix += f":{line}"
            prefix += ": "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ProblemInstance:
    """One natural-language optimization task."""

    id: str
    description: str
    ground_truth: float | None = None
    source_tag: str | None = None


@dataclass(frozen=True)
class Corpus:
    """An ordered, immutable collection of problems.

    Iteration follows the order of the source file.
    """

    name: str
    problems: tuple[ProblemInstance, ...]

    def __len__(self) -> int:
        return len(self.problems)

    def __iter__(self) -> Iterator[ProblemInstance]:
        return iter(self.problems)

    def by_id(self) -> dict[str, ProblemInstance]:
        return {p.id: p for p in self.problems}


@dataclass(frozen=True)
class Finding:
    """One validation diagnostic for a corpus record."""

    problem_id: str
    severity: str  # "error" | "warning"
    message: str


def _parse_answer(raw: object, *, path: Path, line: int) -> float | None:
    if raw is None:
        return None
    if isinstance(raw, bool):
        raise CorpusError("field 'answer': boolean is not a number",
                          path=path, line=line)
    if isinstance(raw, (int, float)):
        value = float(raw)
    elif isinstance(raw, str):
        try:
            value = float(raw.strip())
        except ValueError:
            raise CorpusError(f"field 'answer': not a number: {raw!r}",
                              path=path, line=line) from None
    else:
        raise CorpusError(
            f"field 'answer': expected number, string, or null, got "
            f"{type(raw).__name__}", path=path, line=line)
    if not math.isfinite(value):
        raise CorpusError(f"field 'answer': not finite: {raw!r}",
                          path=path, line=line)
    return value


def load_corpus(path: str | Path) -> Corpus:
    """Load and structurally validate a JSON-lines corpus file.

    Malformed lines, wrong field types, non-finite answers, and
    duplicate ids raise :class:`CorpusError` with the line number.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError("no such corpus file", path=path)
    name = path.stem
    problems: list[ProblemInstance] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, raw_line in enumerate(fh, start=1):
            if not raw_line.strip():
                continue
            try:
                record = json.loads(raw_line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}",
                                  path=path, line=lineno) from exc
            if not isinstance(record, dict):
                raise CorpusError("record is not a JSON object",
                                  path=path, line=lineno)

            rec_id = record.get("id")
            if rec_id is None:
                rec_id = f"{name}-{lineno}"
            elif not isinstance(rec_id, str) or not rec_id:
                raise CorpusError("field 'id': must be a nonempty string",
                                  path=path, line=lineno)
            if rec_id in seen:
                raise CorpusError(f"duplicate id {rec_id!r}",
                                  path=path, line=lineno)
            seen.add(rec_id)

            question = record.get("question")
            if not isinstance(question, str):
                raise CorpusError("field 'question': must be a string",
                                  path=path, line=lineno)

            answer = _parse_answer(record.get("answer"), path=path, line=lineno)

            source = record.get("source")
            if source is not None and not isinstance(source, str):
                raise CorpusError("field 'source': must be a string or null",
                                  path=path, line=lineno)

            problems.append(ProblemInstance(
                id=rec_id,
                description=question,
                ground_truth=answer,
                source_tag=source,
            ))
    if not problems:
        raise CorpusError("corpus contains no records", path=path)
    return Corpus(name=name, problems=tuple(problems))


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Serialize a corpus back to JSON-lines.

    Loading the written file from a path named ``<corpus.name>.jsonl``
    yields an equal corpus.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for p in corpus:
            record = {
                "id": p.id,
                "question": p.description,
                "answer": p.ground_truth,
                "source": p.source_tag,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def validate_corpus(corpus: Corpus) -> list[Finding]:
    """Collect per-record diagnostics beyond structural validity.

    Empty descriptions are errors; a missing ground truth is only a
    warning because unlabeled problems still run, they are just
    excluded from accuracy.
    """
    findings: list[Finding] = []
    for p in corpus:
        if not p.description.strip():
            findings.append(Finding(p.id, "error", "description is empty"))
        if p.ground_truth is None:
            findings.append(Finding(p.id, "warning", "missing ground truth"))
        elif not math.isfinite(p.ground_truth):
            findings.append(Finding(p.id, "error", "ground truth is not finite"))
    return findings
