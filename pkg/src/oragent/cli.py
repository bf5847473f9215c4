"""Command-line interface.

Commands: ``run`` (solve a corpus into a run directory), ``record``
(run against the live endpoint while capturing every response),
``eval`` (score a finished run), ``validate`` (lint a corpus), and
``replay-check`` (re-run a directory from its own recordings and
verify the decisions match).

Option values are resolved in layers: built-in defaults, then a YAML
config file, then explicit command-line flags. Endpoint secrets come
only from the environment (ORAGENT_API_BASE, ORAGENT_API_KEY).

Exit status reflects harness health, not benchmark quality: a sweep
full of failed problems still exits 0, while unusable inputs, replay
divergence, and corpus errors exit nonzero.
"""

from __future__ import annotations

import datetime as _dt
import importlib.metadata
import logging
import os
import shlex
import sys
import tempfile
from pathlib import Path

import click
import yaml
from click.core import ParameterSource

from . import agents, evaluator
from .corpus import CorpusError, load_corpus, validate_corpus
from .gateway import (Gateway, GenerationConfig, LiveBackend,
                      RecordingBackend, ReplayBackend, ReplayStore)
from .loop import (DEFAULT_MAX_ATTEMPTS, PipelineDeps, RunRecord,
                   run_benchmark)
from .rundir import (EPOCH_TIMESTAMP, RunDirectory, RunDirError, RunManifest,
                     canonical_json_bytes, normalized_record_dict,
                     order_records, record_to_dict, sha256_file)
from .sandbox import Sandbox, SandboxLimits

logger = logging.getLogger(__name__)

ENV_API_BASE = "ORAGENT_API_BASE"
ENV_API_KEY = "ORAGENT_API_KEY"

# CLI spellings to internal mode names.
_MODE_CHOICES = {"direct": "direct", "model-code": "model_code",
                 "full": "full"}

# click parameter name -> config file key, where they differ.
_CONFIG_KEYS = {
    "corpus_path": "corpus",
    "mode_flag": "mode",
    "templates_path": "templates",
    "backend_name": "backend",
}


def _version() -> str:
    try:
        return importlib.metadata.version("oragent")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def _utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise click.UsageError(f"could not read config file: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise click.UsageError(f"{path}: config file is not a mapping")
    return data


def _layered(ctx: click.Context, config: dict, **flag_values) -> dict:
    """Apply defaults < config file < explicit flags."""
    merged = {}
    for name, value in flag_values.items():
        key = _CONFIG_KEYS.get(name, name)
        source = ctx.get_parameter_source(name)
        if source == ParameterSource.COMMANDLINE or key not in config:
            merged[name] = value
        else:
            merged[name] = config[key]
    return merged


def _load_template_set(path: str | None) -> agents.PromptTemplateSet:
    if path is None:
        return agents.default_templates()
    try:
        return agents.load_templates(path)
    except (OSError, agents.TemplateError, yaml.YAMLError) as exc:
        raise click.UsageError(f"could not load templates: {exc}")


def _checked_corpus(path: str):
    try:
        corpus = load_corpus(path)
    except CorpusError as exc:
        raise click.UsageError(str(exc))
    errors = [f for f in validate_corpus(corpus) if f.severity == "error"]
    if errors:
        for finding in errors:
            click.echo(f"error: {finding.problem_id}: {finding.message}",
                       err=True)
        raise click.UsageError(f"corpus has {len(errors)} error finding(s)")
    return corpus


def _build_backend(backend_name: str, run_dir: RunDirectory,
                   replay_source: str | None):
    if backend_name == "replay":
        source = Path(replay_source) if replay_source else run_dir.replay_dir
        if not source.is_dir():
            raise click.UsageError(f"replay source {source} does not exist")
        store = ReplayStore(source)
        if not store.keys():
            raise click.UsageError(
                f"replay source {source} contains no recorded responses; "
                "pass --replay-dir or point --out at a recorded run")
        inner = ReplayBackend(store)
        if source.resolve() == run_dir.replay_dir.resolve():
            return inner
        # Tee consumed responses into the run directory so the run is
        # self-contained and replay-checkable afterwards.
        return RecordingBackend(inner, ReplayStore(run_dir.replay_dir))
    base = os.environ.get(ENV_API_BASE)
    if not base:
        raise click.UsageError(
            f"{ENV_API_BASE} must be set for the {backend_name} backend")
    live = LiveBackend(base, os.environ.get(ENV_API_KEY))
    if backend_name == "record":
        return RecordingBackend(live, ReplayStore(run_dir.replay_dir))
    return live


def _progress_line(record: RunRecord) -> str:
    if record.solved:
        return (f"{record.problem_id}: solved {record.final_objective:g} "
                f"({len(record.attempts)} attempt(s))")
    return (f"{record.problem_id}: failed {record.final_error.kind} "
            f"({len(record.attempts)} attempt(s))")


def _execute_run(*, corpus_path: str | None, out: str | None,
                 backend_name: str, mode_flag: str, model: str,
                 temperature: float, max_output_tokens: int,
                 request_timeout: float, timeout: float, max_attempts: int,
                 workers: int, solver_name: str, templates_path: str | None,
                 replay_dir: str | None, interpreter: str | None,
                 fixture_runtime: str | None, keep_artifacts: bool,
                 tolerance: float) -> None:
    if not corpus_path:
        raise click.UsageError("--corpus is required (flag or config file)")
    if not out:
        raise click.UsageError("--out is required (flag or config file)")
    if not model:
        raise click.UsageError("--model is required (flag or config file)")
    if mode_flag not in _MODE_CHOICES:
        raise click.UsageError(f"unknown mode {mode_flag!r}")
    if not Path(corpus_path).is_file():
        raise click.UsageError(f"corpus file {corpus_path} does not exist")
    mode = _MODE_CHOICES[mode_flag]

    corpus = _checked_corpus(corpus_path)
    for finding in validate_corpus(corpus):
        if finding.severity == "warning":
            logger.warning("%s: %s", finding.problem_id, finding.message)

    templates = _load_template_set(templates_path)
    run_dir = RunDirectory(out).create()
    run_dir.copy_corpus(Path(corpus_path))

    backend = _build_backend(backend_name, run_dir, replay_dir)
    deterministic = backend_name == "replay"

    interpreter_argv = shlex.split(interpreter) if interpreter else None
    sandbox = Sandbox(
        SandboxLimits(wall_timeout=timeout),
        interpreter=interpreter_argv,
        extra_pythonpath=fixture_runtime,
        keep_artifacts=keep_artifacts,
        artifact_root=run_dir.root / "scratch" if keep_artifacts else None)

    try:
        gen_config = GenerationConfig(
            model_id=model, temperature=temperature,
            max_output_tokens=max_output_tokens,
            request_timeout=request_timeout)
        deps = PipelineDeps(
            gateway=Gateway(backend), templates=templates, sandbox=sandbox,
            gen_config=gen_config, solver_name=solver_name,
            max_attempts=max_attempts, deterministic_clock=deterministic)
    except ValueError as exc:
        raise click.UsageError(str(exc))

    started_at = EPOCH_TIMESTAMP if deterministic else _utc_now()
    manifest = RunManifest(
        backend=backend_name, mode=mode, model_id=model,
        temperature=temperature, max_output_tokens=max_output_tokens,
        max_attempts=max_attempts, timeout_secs=timeout,
        solver_name=solver_name, tolerance=tolerance,
        template_hash=templates.content_hash(),
        corpus_file=Path(corpus_path).name,
        corpus_sha256=sha256_file(Path(corpus_path)),
        workers=workers, interpreter=list(interpreter_argv or []) or None,
        extra_pythonpath=fixture_runtime,
        started_at=started_at, ended_at=None, harness_version=_version())
    run_dir.write_manifest(manifest)

    records = run_benchmark(
        corpus, mode, deps, workers=workers, run_dir=run_dir,
        on_record=lambda r: click.echo(_progress_line(r)))

    ended_at = EPOCH_TIMESTAMP if deterministic else _utc_now()
    run_dir.write_manifest(
        RunManifest(**{**manifest.to_dict(), "ended_at": ended_at}))

    solved = sum(1 for r in records if r.solved)
    click.echo(f"done: {solved}/{len(records)} solved -> {run_dir.root}")


def _run_options(fn):
    decorators = [
        click.option("--corpus", "corpus_path",
                     type=click.Path(dir_okay=False), default=None,
                     help="Problem corpus (JSON lines)."),
        click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Run directory to create or resume."),
        click.option("--mode", "mode_flag",
                     type=click.Choice(sorted(_MODE_CHOICES)), default="full",
                     show_default=True, help="Pipeline mode."),
        click.option("--model", default="", help="Model identifier."),
        click.option("--temperature", type=float, default=0.0,
                     show_default=True),
        click.option("--max-output-tokens", type=int, default=4096,
                     show_default=True),
        click.option("--request-timeout", type=float, default=120.0,
                     show_default=True, help="Per-request timeout, seconds."),
        click.option("--timeout", type=float, default=60.0, show_default=True,
                     help="Sandbox wall-clock timeout per execution."),
        click.option("--max-attempts", type=int,
                     default=DEFAULT_MAX_ATTEMPTS, show_default=True,
                     help="Execution attempts in full mode."),
        click.option("--workers", type=int, default=1, show_default=True,
                     help="Concurrent problems."),
        click.option("--solver-name", default=agents.DEFAULT_SOLVER_NAME,
                     show_default=True,
                     help="Solver the generated code should target."),
        click.option("--templates", "templates_path",
                     type=click.Path(dir_okay=False), default=None,
                     help="Custom prompt template YAML."),
        click.option("--replay-dir", type=click.Path(file_okay=False),
                     default=None,
                     help="Response store for the replay backend."),
        click.option("--interpreter", default=None,
                     help="Interpreter command for sandboxed programs "
                          "(default: this Python)."),
        click.option("--fixture-runtime",
                     type=click.Path(file_okay=False, resolve_path=True),
                     default=None,
                     help="Directory prepended to the sandbox PYTHONPATH."),
        click.option("--keep-artifacts", is_flag=True, default=False,
                     help="Keep sandbox working directories for debugging."),
        click.option("--tolerance", type=float,
                     default=evaluator.DEFAULT_TOLERANCE, show_default=True,
                     help="Judging tolerance recorded in the manifest."),
        click.option("--config", "config_path",
                     type=click.Path(exists=True, dir_okay=False),
                     default=None,
                     help="YAML config file with option defaults."),
    ]
    for decorator in reversed(decorators):
        fn = decorator(fn)
    return fn


@click.group()
@click.version_option(_version(), prog_name="oragent")
def main() -> None:
    """Benchmark harness for language-model optimization solving."""
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_run_options
@click.option("--backend", "backend_name",
              type=click.Choice(["live", "record", "replay"]),
              default="live", show_default=True)
@click.pass_context
def run(ctx: click.Context, config_path, **flags) -> None:
    """Solve every problem in a corpus into a run directory."""
    config = _load_config_file(config_path)
    _execute_run(**_layered(ctx, config, **flags))


@main.command()
@_run_options
@click.pass_context
def record(ctx: click.Context, config_path, **flags) -> None:
    """Run against the live endpoint, capturing every raw response."""
    config = _load_config_file(config_path)
    merged = _layered(ctx, config, **flags)
    _execute_run(backend_name="record", **merged)


@main.command("eval")
@click.option("--run", "run_path", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Run directory to score.")
@click.option("--corpus", "corpus_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="Corpus override (default: the run's own copy).")
@click.option("--tolerance", type=float, default=None,
              help="Judging tolerance (default: manifest value).")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Report directory (default: <run>/report).")
def eval_cmd(run_path, corpus_path, tolerance, out) -> None:
    """Score a finished run and write its report."""
    run_dir = RunDirectory(run_path)
    try:
        manifest = run_dir.read_manifest()
    except (RunDirError, ValueError) as exc:
        raise click.UsageError(str(exc))
    source = corpus_path or run_dir.corpus_path
    try:
        corpus = load_corpus(source)
    except CorpusError as exc:
        raise click.UsageError(str(exc))
    try:
        records = run_dir.load_records()
    except (RunDirError, KeyError, TypeError, ValueError) as exc:
        raise click.UsageError(f"could not load records: {exc}")
    if not records:
        raise click.UsageError(f"{run_path}: no records to evaluate")
    ordered = order_records(records, (p.id for p in corpus))
    config = evaluator.JudgeConfig(
        tolerance=manifest.tolerance if tolerance is None else tolerance)
    try:
        report = evaluator.build_report(ordered, corpus, config)
    except evaluator.EvaluationError as exc:
        raise click.UsageError(str(exc))

    report_dir = Path(out) if out else run_dir.root / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / "metrics.json").write_bytes(
        canonical_json_bytes(evaluator.report_to_dict(report, config)))
    text = evaluator.render_report(report)
    (report_dir / "metrics.txt").write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@main.command()
@click.option("--corpus", "corpus_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def validate(corpus_path) -> None:
    """Lint a corpus file; errors exit nonzero."""
    try:
        corpus = load_corpus(corpus_path)
    except CorpusError as exc:
        raise click.UsageError(str(exc))
    findings = validate_corpus(corpus)
    for finding in findings:
        click.echo(f"{finding.severity}: {finding.problem_id}: "
                   f"{finding.message}")
    errors = sum(1 for f in findings if f.severity == "error")
    warnings = len(findings) - errors
    click.echo(f"{len(corpus)} records: {errors} error(s), "
               f"{warnings} warning(s)")
    if errors:
        raise SystemExit(1)


@main.command("replay-check")
@click.option("--run", "run_path", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Run directory to verify.")
@click.option("--templates", "templates_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="Template YAML the run was made with, if not default.")
@click.option("--fixture-runtime",
              type=click.Path(file_okay=False, resolve_path=True),
              default=None,
              help="Override the recorded sandbox PYTHONPATH entry.")
def replay_check(run_path, templates_path, fixture_runtime) -> None:
    """Re-run a directory from its own recordings and compare decisions.

    Re-executes every problem against the stored responses and checks
    that each record matches the original, ignoring wall-time fields.
    Exits 1 at the first divergence.
    """
    run_dir = RunDirectory(run_path)
    try:
        manifest = run_dir.read_manifest()
    except (RunDirError, ValueError) as exc:
        raise click.UsageError(str(exc))
    if not run_dir.corpus_path.is_file():
        raise click.UsageError(f"{run_path}: missing corpus copy")
    if not run_dir.replay_dir.is_dir():
        raise click.UsageError(f"{run_path}: missing replay store")

    templates = _load_template_set(templates_path)
    if templates.content_hash() != manifest.template_hash:
        raise click.UsageError(
            "template hash does not match the manifest; pass the run's "
            "templates via --templates")

    try:
        corpus = load_corpus(run_dir.corpus_path)
    except CorpusError as exc:
        raise click.UsageError(str(exc))

    originals = {d["problem_id"]: d for d in run_dir.load_record_dicts()}

    backend = ReplayBackend(ReplayStore(run_dir.replay_dir))
    pythonpath = fixture_runtime or manifest.extra_pythonpath
    with tempfile.TemporaryDirectory(prefix="oragent-replay-check-") as tmp:
        sandbox = Sandbox(
            SandboxLimits(wall_timeout=manifest.timeout_secs),
            interpreter=manifest.interpreter,
            extra_pythonpath=pythonpath,
            artifact_root=tmp)
        deps = PipelineDeps(
            gateway=Gateway(backend), templates=templates, sandbox=sandbox,
            gen_config=GenerationConfig(
                model_id=manifest.model_id,
                temperature=manifest.temperature,
                max_output_tokens=manifest.max_output_tokens),
            solver_name=manifest.solver_name,
            max_attempts=manifest.max_attempts,
            deterministic_clock=True)
        records = run_benchmark(corpus, manifest.mode, deps)

    for rerun in records:
        original = originals.get(rerun.problem_id)
        if original is None:
            click.echo(f"divergence: {rerun.problem_id}: no original record")
            raise SystemExit(1)
        if (normalized_record_dict(record_to_dict(rerun))
                != normalized_record_dict(original)):
            click.echo(f"divergence: {rerun.problem_id}: decisions differ "
                       "from the recorded run")
            raise SystemExit(1)
    click.echo(f"replay check passed: {len(records)} record(s) match")


if __name__ == "__main__":
    main()
