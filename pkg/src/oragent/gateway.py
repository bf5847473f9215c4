"""Chat-completion gateway with live, recording, and replay backends.

All completions go through :class:`Gateway`, which validates the
transcript, computes a content-addressed key for it, dispatches to a
backend, and splits reasoning spans out of the raw reply. The replay
backend makes entire benchmark runs deterministic: it answers from a
directory of previously captured responses and treats a missing key as
a hard error rather than silently falling back to the network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

logger = logging.getLogger(__name__)

_ROLES = ("system", "user", "assistant")

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"


class GatewayError(Exception):
    """Base class for completion failures."""


class TranscriptError(GatewayError):
    """A transcript violated the shape required for completion."""


class EndpointError(GatewayError):
    """The remote endpoint failed or returned an unusable response."""


class ReplayMissError(GatewayError):
    """Replay store has no response for the requested transcript key."""

    def __init__(self, key: str) -> None:
        self.key = key
        super().__init__(f"no recorded response for transcript key {key}")


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str


@dataclass(frozen=True)
class Transcript:
    """An ordered chat history.

    At most one system message is allowed and it must come first; the
    remaining roles alternate user/assistant and must end with a user
    message when the transcript is submitted for completion.
    """

    messages: tuple[ChatMessage, ...]

    def validate_for_completion(self) -> None:
        msgs = self.messages
        if not msgs:
            raise TranscriptError("transcript is empty")
        for m in msgs:
            if m.role not in _ROLES:
                raise TranscriptError(f"unknown role {m.role!r}")
            if not m.content:
                raise TranscriptError(f"empty content in {m.role} message")
        body = msgs[1:] if msgs[0].role == "system" else msgs
        if any(m.role == "system" for m in body):
            raise TranscriptError("system message must be unique and first")
        expected = "user"
        for m in body:
            if m.role != expected:
                raise TranscriptError(
                    "roles after the system message must alternate "
                    "user/assistant")
            expected = "assistant" if expected == "user" else "user"
        if not body or body[-1].role != "user":
            raise TranscriptError("transcript must end with a user message")


@dataclass(frozen=True)
class GenerationConfig:
    """Decoding parameters; part of the replay identity of a request."""

    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 4096
    request_timeout: float = 120.0

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be nonempty")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError("temperature must be finite and >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if not math.isfinite(self.request_timeout) or self.request_timeout <= 0:
            raise ValueError("request_timeout must be finite and positive")


@dataclass(frozen=True)
class CompletionResult:
    answer_text: str
    reasoning_text: str | None
    raw_text: str
    usage: dict[str, int] | None = None


def strip_reasoning(raw: str) -> tuple[str | None, str]:
    """Split ``<think>`` spans out of a raw assistant reply.

    Returns ``(reasoning, answer)``. Well-formed spans are removed from
    the answer and newline-joined into the reasoning text. An opening
    tag that never closes is treated fail-safe: everything from that
    tag onward becomes reasoning and the answer is empty, so truncated
    deliberation can never leak into downstream parsing. The answer
    never contains an opening tag, which makes the split idempotent.
    """
    reasoning_parts: list[str] = []
    answer_parts: list[str] = []
    pos = 0
    while True:
        open_at = raw.find(THINK_OPEN, pos)
        if open_at < 0:
            answer_parts.append(raw[pos:])
            break
        answer_parts.append(raw[pos:open_at])
        close_at = raw.find(THINK_CLOSE, open_at + len(THINK_OPEN))
        if close_at < 0:
            reasoning_parts.append(raw[open_at + len(THINK_OPEN):])
            return "\n".join(reasoning_parts), ""
        reasoning_parts.append(raw[open_at + len(THINK_OPEN):close_at])
        pos = close_at + len(THINK_CLOSE)
    answer = "".join(answer_parts).strip()
    reasoning = "\n".join(reasoning_parts) if reasoning_parts else None
    return reasoning, answer


def transcript_key(transcript: Transcript, config: GenerationConfig) -> str:
    """Content-addressed identity of a completion request.

    Covers message roles and contents plus the decoding parameters that
    change sampling (model and temperature). Token and timeout limits
    are excluded on purpose: raising a timeout must not orphan an
    existing recording.
    """
    payload = {
        "model": config.model_id,
        "temperature": config.temperature,
        "messages": [[m.role, m.content] for m in transcript.messages],
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ReplayStore:
    """Directory of raw response files, one ``<key>.txt`` per transcript key."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.txt"

    def get(self, key: str) -> str | None:
        path = self.path_for(key)
        if not path.is_file():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, key: str, raw_text: str) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.path_for(key).write_text(raw_text, encoding="utf-8")

    def keys(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.stem for p in self.root.glob("*.txt"))


class Backend(Protocol):
    """Produces the raw assistant reply for a validated transcript."""

    def raw_complete(self, transcript: Transcript, config: GenerationConfig,
                     key: str) -> tuple[str, dict[str, int] | None]:
        ...


@dataclass(frozen=True)
class RetryPolicy:
    """Bounded retry with exponential backoff for transient failures."""

    max_retries: int = 3
    backoff_base: float = 1.0
    backoff_factor: float = 2.0


class LiveBackend:
    """OpenAI-compatible chat-completions client.

    Retries transport errors and 5xx responses up to
    ``retry.max_retries`` times with exponential backoff; any other
    non-200 status is a permanent failure and surfaces immediately.
    """

    def __init__(self, base_url: str, api_key: str | None = None, *,
                 retry: RetryPolicy | None = None,
                 transport: httpx.BaseTransport | None = None,
                 sleep=time.sleep) -> None:
        if not base_url:
            raise ValueError("base_url must be nonempty")
        self.retry = retry or RetryPolicy()
        self._sleep = sleep
        headers = {}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(base_url=base_url.rstrip("/"),
                                    headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def raw_complete(self, transcript: Transcript, config: GenerationConfig,
                     key: str) -> tuple[str, dict[str, int] | None]:
        payload = {
            "model": config.model_id,
            "messages": [{"role": m.role, "content": m.content}
                         for m in transcript.messages],
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        }
        delay = self.retry.backoff_base
        last_error: Exception | None = None
        for attempt in range(self.retry.max_retries + 1):
            if attempt:
                logger.warning("retrying completion (%d/%d) after: %s",
                               attempt, self.retry.max_retries, last_error)
                self._sleep(delay)
                delay *= self.retry.backoff_factor
            try:
                response = self._client.post(
                    "/chat/completions", json=payload,
                    timeout=config.request_timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = EndpointError(
                    f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise EndpointError(
                    f"endpoint returned status {response.status_code}: "
                    f"{response.text[:200]}")
            return self._parse_body(response)
        raise EndpointError(
            f"completion failed after {self.retry.max_retries} retries: "
            f"{last_error}")

    @staticmethod
    def _parse_body(response: httpx.Response) -> tuple[str, dict[str, int] | None]:
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise EndpointError(f"malformed completion body: {exc}") from exc
        if not isinstance(content, str):
            raise EndpointError("completion content is not text")
        usage = body.get("usage")
        if isinstance(usage, dict):
            usage = {k: v for k, v in usage.items() if isinstance(v, int)}
        else:
            usage = None
        return content, usage


class ReplayBackend:
    """Answers every request from a replay store; a miss is fatal."""

    def __init__(self, store: ReplayStore) -> None:
        self.store = store

    def raw_complete(self, transcript: Transcript, config: GenerationConfig,
                     key: str) -> tuple[str, dict[str, int] | None]:
        raw = self.store.get(key)
        if raw is None:
            raise ReplayMissError(key)
        return raw, None


class RecordingBackend:
    """Delegates to an inner backend and persists each raw response.

    Wrapping the replay backend with a run-local store is how a run
    directory captures its own copy of every response it consumed.
    """

    def __init__(self, inner: Backend, store: ReplayStore) -> None:
        self.inner = inner
        self.store = store

    def raw_complete(self, transcript: Transcript, config: GenerationConfig,
                     key: str) -> tuple[str, dict[str, int] | None]:
        raw, usage = self.inner.raw_complete(transcript, config, key)
        self.store.put(key, raw)
        return raw, usage


class Gateway:
    """Validates transcripts, dispatches to a backend, splits reasoning."""

    def __init__(self, backend: Backend) -> None:
        self.backend = backend

    def complete(self, transcript: Transcript,
                 config: GenerationConfig) -> CompletionResult:
        transcript.validate_for_completion()
        key = transcript_key(transcript, config)
        raw, usage = self.backend.raw_complete(transcript, config, key)
        reasoning, answer = strip_reasoning(raw)
        return CompletionResult(answer_text=answer, reasoning_text=reasoning,
                                raw_text=raw, usage=usage)
