"""Prompt assembly and reply parsing for the pipeline stages.

Three stages talk to the language model: modeling (problem text to a
math model document), coding (math model to a runnable program), and
repair (failing program plus error evidence to a corrected program).
Repair comes in two flavors that differ in what the model is allowed to
reconsider: code repair sees only the program and the error, math
repair additionally sees the model document.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import yaml

from .gateway import (ChatMessage, CompletionResult, GenerationConfig,
                      Gateway, Transcript, transcript_key)
from .sandbox import ErrorReport

PLACEHOLDER_NAMES = ("problem", "math_model", "code", "error",
                     "solver_name", "protocol_spec")
_PLACEHOLDER_RE = re.compile(r"\{(%s)\}" % "|".join(PLACEHOLDER_NAMES))

TEMPLATE_KEYS = ("system_math", "user_math", "system_code", "user_code",
                 "user_code_repair", "user_math_repair", "user_direct")

DEFAULT_SOLVER_NAME = "Gurobi"

# What a generated program must print so the harness can read its verdict.
DEFAULT_PROTOCOL_SPEC = """\
After solving, the program must print the result on stdout in exactly
one of these forms, each alone on its own line:

    OPTIMAL_VALUE=<number>     (decimal or scientific notation)
    MODEL_STATUS=INFEASIBLE
    MODEL_STATUS=UNBOUNDED

Print OPTIMAL_VALUE only when an optimal solution was found."""

# Tail budgets for the error evidence embedded in repair prompts.
STDERR_EXCERPT_BUDGET = 4000
STDOUT_EXCERPT_BUDGET = 1000


class AgentError(Exception):
    """Base class for stage failures that are not transport problems."""


class TemplateError(AgentError):
    """A template set is malformed or incomplete."""


class UnboundPlaceholderError(TemplateError):
    """A template referenced a placeholder the stage does not bind."""

    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"placeholder {{{name}}} is not bound in this stage")


class EmptyModelError(AgentError):
    """The modeling stage returned no usable answer text."""


class NoCodeBlockError(AgentError):
    """A coding-stage reply contained nothing recognizable as a program."""


@dataclass(frozen=True)
class PromptTemplateSet:
    system_math: str
    user_math: str
    system_code: str
    user_code: str
    user_code_repair: str
    user_math_repair: str
    user_direct: str

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "PromptTemplateSet":
        fields = {}
        for key in TEMPLATE_KEYS:
            value = mapping.get(key)
            if not isinstance(value, str) or not value.strip():
                raise TemplateError(f"template {key!r} is missing or empty")
            fields[key] = value
        return cls(**fields)

    def content_hash(self) -> str:
        blob = "\x00".join(getattr(self, key) for key in TEMPLATE_KEYS)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_templates(path: str | Path) -> PromptTemplateSet:
    """Load a template set from a YAML file of name-to-text pairs."""
    with Path(path).open(encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise TemplateError(f"{path}: template file is not a mapping")
    return PromptTemplateSet.from_mapping(data)


def default_templates() -> PromptTemplateSet:
    text = (resources.files("oragent") / "templates"
            / "default_templates.yaml").read_text(encoding="utf-8")
    return PromptTemplateSet.from_mapping(yaml.safe_load(text))


def render_template(template: str, bindings: Mapping[str, str]) -> str:
    """Substitute bound placeholders in one pass.

    Single-pass substitution means braces inside bound values are never
    re-expanded. Referencing an unbound placeholder raises; unknown
    brace constructs are left untouched as literal text.
    """

    def replace(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in bindings:
            raise UnboundPlaceholderError(name)
        return bindings[name]

    return _PLACEHOLDER_RE.sub(replace, template)


@dataclass(frozen=True)
class MathModelDoc:
    """The modeling stage's output, kept verbatim for later prompts."""

    problem_id: str
    body: str
    transcript_key: str

    def __post_init__(self) -> None:
        if not self.body.strip():
            raise ValueError("math model body must be nonempty")


@dataclass(frozen=True)
class CodeArtifact:
    """One candidate program and where it came from.

    provenance is "initial" exactly when attempt_index is 0; repaired
    programs carry the repair flavor that produced them.
    """

    problem_id: str
    source: str
    attempt_index: int
    provenance: str  # "initial" | "code_repair" | "math_repair"
    transcript_key: str

    def __post_init__(self) -> None:
        if self.provenance not in ("initial", "code_repair", "math_repair"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.attempt_index < 0:
            raise ValueError("attempt_index must be >= 0")
        if (self.attempt_index == 0) != (self.provenance == "initial"):
            raise ValueError(
                "attempt_index 0 and provenance 'initial' imply each other")

    @property
    def code_id(self) -> str:
        return code_id(self.source)


def code_id(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


_FENCE_RE = re.compile(r"```[^\n]*\n?(.*?)```", re.DOTALL)
# Heuristic for fenceless replies: does the first line look like the
# start of a Python program?
_PROGRAM_LINE_RE = re.compile(
    r"^(#!|#|import\s|from\s+\S+\s+import\b|def\s|class\s|@\w"
    r"|print\s*\(|if\s|for\s|while\s|try\s*:|with\s"
    r"|[A-Za-z_][\w.\[\], ]*=[^=])")


def extract_code_block(answer: str) -> str:
    """Pull the program out of a coding-stage reply.

    Prefers fenced blocks and takes the longest when there are several
    (models often echo a short snippet before the full program). A
    fenceless reply is accepted whole if its first line plausibly
    starts a program; otherwise there is no code to run.
    """
    blocks = [m.group(1).strip("\n") for m in _FENCE_RE.finditer(answer)]
    blocks = [b for b in blocks if b.strip()]
    if blocks:
        return max(blocks, key=len)
    text = answer.strip()
    first_line = text.split("\n", 1)[0].strip()
    if first_line and _PROGRAM_LINE_RE.match(first_line):
        return text
    raise NoCodeBlockError("reply contained no code block")


def format_error_excerpt(report: ErrorReport, *,
                         stderr_budget: int = STDERR_EXCERPT_BUDGET,
                         stdout_budget: int = STDOUT_EXCERPT_BUDGET) -> str:
    """Summarize an execution failure for a repair prompt.

    Keeps the tails of the captured streams within fixed budgets so the
    prompt cannot blow up on chatty programs. Always leads with the
    failure kind and exit code, so a crash with empty stderr still
    yields evidence the model can act on.
    """
    lines = [f"failure kind: {report.kind}"]
    if report.exit_code is not None:
        lines.append(f"exit code: {report.exit_code}")
    stderr = report.stderr_excerpt[-stderr_budget:]
    stdout = report.stdout_excerpt[-stdout_budget:]
    if stderr.strip():
        lines.append("--- stderr (tail) ---")
        lines.append(stderr.rstrip("\n"))
    if stdout.strip():
        lines.append("--- stdout (tail) ---")
        lines.append(stdout.rstrip("\n"))
    return "\n".join(lines)


def _two_part(system_template: str, user_template: str,
              bindings: Mapping[str, str]) -> Transcript:
    return Transcript((
        ChatMessage("system", render_template(system_template, bindings)),
        ChatMessage("user", render_template(user_template, bindings)),
    ))


def build_math_prompt(problem_text: str,
                      templates: PromptTemplateSet) -> Transcript:
    return _two_part(templates.system_math, templates.user_math,
                     {"problem": problem_text})


def build_code_prompt(model: MathModelDoc, templates: PromptTemplateSet, *,
                      solver_name: str, protocol_spec: str) -> Transcript:
    return _two_part(templates.system_code, templates.user_code, {
        "math_model": model.body,
        "solver_name": solver_name,
        "protocol_spec": protocol_spec,
    })


def build_direct_prompt(problem_text: str, templates: PromptTemplateSet, *,
                        solver_name: str, protocol_spec: str) -> Transcript:
    return _two_part(templates.system_code, templates.user_direct, {
        "problem": problem_text,
        "solver_name": solver_name,
        "protocol_spec": protocol_spec,
    })


def build_code_repair_prompt(code: CodeArtifact, error: ErrorReport,
                             templates: PromptTemplateSet, *,
                             solver_name: str,
                             protocol_spec: str) -> Transcript:
    # Deliberately does not bind math_model: code repair must judge the
    # program on the error evidence alone.
    return _two_part(templates.system_code, templates.user_code_repair, {
        "code": code.source,
        "error": format_error_excerpt(error),
        "solver_name": solver_name,
        "protocol_spec": protocol_spec,
    })


def build_math_repair_prompt(model: MathModelDoc, code: CodeArtifact,
                             error: ErrorReport,
                             templates: PromptTemplateSet, *,
                             solver_name: str,
                             protocol_spec: str) -> Transcript:
    return _two_part(templates.system_code, templates.user_math_repair, {
        "math_model": model.body,
        "code": code.source,
        "error": format_error_excerpt(error),
        "solver_name": solver_name,
        "protocol_spec": protocol_spec,
    })


def _completed_code(problem_id: str, result: CompletionResult, key: str, *,
                    attempt_index: int, provenance: str) -> CodeArtifact:
    source = extract_code_block(result.answer_text)
    return CodeArtifact(problem_id=problem_id, source=source,
                        attempt_index=attempt_index, provenance=provenance,
                        transcript_key=key)


def run_math_agent(problem_id: str, problem_text: str, gateway: Gateway,
                   templates: PromptTemplateSet,
                   config: GenerationConfig) -> MathModelDoc:
    prompt = build_math_prompt(problem_text, templates)
    result = gateway.complete(prompt, config)
    if not result.answer_text.strip():
        raise EmptyModelError(
            f"modeling reply for {problem_id!r} contained no answer text")
    return MathModelDoc(problem_id=problem_id, body=result.answer_text,
                        transcript_key=transcript_key(prompt, config))


def run_code_agent(model: MathModelDoc, gateway: Gateway,
                   templates: PromptTemplateSet, config: GenerationConfig, *,
                   solver_name: str, protocol_spec: str) -> CodeArtifact:
    prompt = build_code_prompt(model, templates, solver_name=solver_name,
                               protocol_spec=protocol_spec)
    result = gateway.complete(prompt, config)
    return _completed_code(model.problem_id, result,
                           transcript_key(prompt, config),
                           attempt_index=0, provenance="initial")


def run_direct_agent(problem_id: str, problem_text: str, gateway: Gateway,
                     templates: PromptTemplateSet, config: GenerationConfig, *,
                     solver_name: str, protocol_spec: str) -> CodeArtifact:
    prompt = build_direct_prompt(problem_text, templates,
                                 solver_name=solver_name,
                                 protocol_spec=protocol_spec)
    result = gateway.complete(prompt, config)
    return _completed_code(problem_id, result, transcript_key(prompt, config),
                           attempt_index=0, provenance="initial")


def run_code_repair_agent(code: CodeArtifact, error: ErrorReport,
                          gateway: Gateway, templates: PromptTemplateSet,
                          config: GenerationConfig, *, solver_name: str,
                          protocol_spec: str,
                          attempt_index: int) -> CodeArtifact:
    prompt = build_code_repair_prompt(code, error, templates,
                                      solver_name=solver_name,
                                      protocol_spec=protocol_spec)
    result = gateway.complete(prompt, config)
    return _completed_code(code.problem_id, result,
                           transcript_key(prompt, config),
                           attempt_index=attempt_index,
                           provenance="code_repair")


def run_math_repair_agent(model: MathModelDoc, code: CodeArtifact,
                          error: ErrorReport, gateway: Gateway,
                          templates: PromptTemplateSet,
                          config: GenerationConfig, *, solver_name: str,
                          protocol_spec: str,
                          attempt_index: int) -> CodeArtifact:
    prompt = build_math_repair_prompt(model, code, error, templates,
                                      solver_name=solver_name,
                                      protocol_spec=protocol_spec)
    result = gateway.complete(prompt, config)
    return _completed_code(code.problem_id, result,
                           transcript_key(prompt, config),
                           attempt_index=attempt_index,
                           provenance="math_repair")
