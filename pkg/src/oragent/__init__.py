"""Natural-language optimization solving pipeline and benchmark harness."""

from .agents import (CodeArtifact, MathModelDoc, PromptTemplateSet,
                     default_templates, extract_code_block, load_templates)
from .corpus import (Corpus, CorpusError, Finding, ProblemInstance,
                     load_corpus, validate_corpus, write_corpus)
from .evaluator import (JudgeConfig, MetricCell, aggregate, build_report,
                        judge, render_2dp)
from .gateway import (ChatMessage, CompletionResult, Gateway,
                      GenerationConfig, LiveBackend, RecordingBackend,
                      ReplayBackend, ReplayStore, Transcript,
                      strip_reasoning, transcript_key)
from .loop import (AttemptTrace, PipelineDeps, RunRecord, decide_repair,
                   run_benchmark, solve)
from .rundir import RunDirectory, RunManifest
from .sandbox import (ErrorReport, ExecutionOutcome, Sandbox, SandboxLimits,
                      Solution, parse_result)

__all__ = [
    "AttemptTrace", "ChatMessage", "CodeArtifact", "CompletionResult",
    "Corpus", "CorpusError", "ErrorReport", "ExecutionOutcome", "Finding",
    "Gateway", "GenerationConfig", "JudgeConfig", "LiveBackend",
    "MathModelDoc", "MetricCell", "PipelineDeps", "ProblemInstance",
    "PromptTemplateSet", "RecordingBackend", "ReplayBackend", "ReplayStore",
    "RunDirectory", "RunManifest", "RunRecord", "Sandbox", "SandboxLimits",
    "Solution", "Transcript", "aggregate", "build_report", "decide_repair",
    "default_templates", "extract_code_block", "judge", "load_corpus",
    "load_templates", "parse_result", "render_2dp", "run_benchmark", "solve",
    "strip_reasoning", "transcript_key", "validate_corpus", "write_corpus",
]
