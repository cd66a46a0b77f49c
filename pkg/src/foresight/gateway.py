"""Uniform chat-completion access with a remote HTTP backend and a scripted one.

The remote backend speaks the common ``POST {base_url}/chat/completions``
protocol.  The scripted backend replays canned replies keyed by request tag
and is the workhorse for offline, deterministic runs.  Both are safe for
concurrent ``complete`` calls; the call log serializes appends internally.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, TypeVar

import httpx

from .errors import (
    GatewayError,
    HttpStatusError,
    MalformedOutput,
    MissingApiKey,
    ScriptMiss,
    Timeout,
)

logger = logging.getLogger(__name__)

PHASES = ("expand", "segment", "critique", "summarize", "refine", "judge", "classify")

DEFAULT_TEMPERATURE = 0.7  # generation-style calls; judging overrides with 0.0
JUDGE_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 1024

_RETRYABLE_STATUS = {429}


@dataclass(frozen=True)
class ChatRequest:
    """One chat call.  ``tag`` is "{phase}:{subject}" and keys logs and scripts."""

    tag: str
    system: str
    user: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        phase, sep, subject = self.tag.partition(":")
        if not sep or phase not in PHASES or not subject:
            raise ValueError(
                f"tag must be '{{phase}}:{{subject}}' with phase in {PHASES}, got {self.tag!r}"
            )
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def canonical_json(self) -> str:
        return json.dumps(
            {
                "tag": self.tag,
                "system": self.system,
                "user": self.user,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            },
            sort_keys=True,
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class ProviderConfig:
    """Connection settings for a remote chat-completions endpoint.

    The API key is read from the environment variable named by
    ``api_key_env``; keys never appear in config values or run artifacts.
    Retries apply only to transport errors and HTTP 429/5xx.
    """

    base_url: str
    model: str
    api_key_env: str = ""
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass(frozen=True)
class Script:
    """Canned replies: tag -> ordered list of texts, last entry repeating."""

    entries: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for tag, replies in self.entries.items():
            if not replies:
                raise ValueError(f"script entry for {tag!r} must be non-empty")


def load_script(path: str | Path) -> Script:
    """Read a script file: JSON object mapping tag to a string or list of strings."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"script file {path} must contain a JSON object")
    entries: dict[str, list[str]] = {}
    for tag, value in raw.items():
        if isinstance(value, str):
            entries[tag] = [value]
        elif isinstance(value, list) and all(isinstance(v, str) for v in value):
            entries[tag] = list(value)
        else:
            raise ValueError(f"script entry {tag!r} must be a string or list of strings")
    return Script(entries)


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class ScriptedBackend:
    """Replays a :class:`Script`; a missing tag is an error, never a default.

    Replies are a pure function of (script, tag, per-tag call ordinal), so
    repeated runs are byte-identical.
    """

    def __init__(self, script: Script):
        self._script = script
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            replies = self._script.entries.get(request.tag)
            if replies is None:
                raise ScriptMiss(request.tag)
            index = self._cursor.get(request.tag, 0)
            self._cursor[request.tag] = index + 1
        return replies[min(index, len(replies) - 1)]


class HttpBackend:
    """Remote chat-completions endpoint with bounded retries.

    Backoff before attempt ``k`` (0-based) is drawn uniformly from
    ``[0, backoff_base * 2**k]`` (full jitter).  4xx statuses other than 429
    fail immediately.
    """

    def __init__(
        self,
        config: ProviderConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._config = config
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            timeout=config.timeout,
            transport=transport,
        )
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._config.api_key_env:
            key = os.environ.get(self._config.api_key_env)
            if not key:
                raise MissingApiKey(self._config.api_key_env)
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, request: ChatRequest) -> str:
        body = {
            "model": self._config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = self._headers()
        last_error: GatewayError | None = None
        attempts = self._config.max_retries + 1
        for attempt in range(attempts):
            if attempt:
                self._sleep(random.uniform(0, self._config.backoff_base * 2 ** (attempt - 1)))
            try:
                response = self._client.post("/chat/completions", json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = Timeout(str(exc))
                logger.warning("timeout on %s (attempt %d/%d)", request.tag, attempt + 1, attempts)
                continue
            except httpx.HTTPError as exc:
                last_error = GatewayError(f"transport error: {exc}")
                logger.warning(
                    "transport error on %s (attempt %d/%d): %s",
                    request.tag, attempt + 1, attempts, exc,
                )
                continue
            if response.status_code in _RETRYABLE_STATUS or response.status_code >= 500:
                last_error = HttpStatusError(response.status_code, response.text)
                logger.warning(
                    "HTTP %d on %s (attempt %d/%d)",
                    response.status_code, request.tag, attempt + 1, attempts,
                )
                continue
            if response.status_code >= 400:
                raise HttpStatusError(response.status_code, response.text)
            return _extract_content(response)
        assert last_error is not None
        raise last_error


def _extract_content(response: httpx.Response) -> str:
    try:
        payload = response.json()
        content = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise GatewayError(f"malformed completion payload: {exc}") from exc
    if not isinstance(content, str):
        raise GatewayError("completion content is not text")
    return content


class CallLog:
    """Append-only record of every completed call.

    ``calls.log`` holds one tab-separated line per call: timestamp, tag,
    sha256 of the canonical request, sha256 of the response, latency in ms.
    Full bodies are mirrored into ``calls/{ordinal}.txt`` (content only, no
    clock values, so mirrors are reproducible).
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.log_path = self.directory / "calls.log"
        self.mirror_dir = self.directory / "calls"
        self.mirror_dir.mkdir(exist_ok=True)
        self.log_path.write_text("", encoding="utf-8")
        self._ordinal = 0
        self._lock = threading.Lock()

    def record(self, request: ChatRequest, response_text: str, latency_ms: int) -> None:
        request_hash = hashlib.sha256(request.canonical_json().encode("utf-8")).hexdigest()
        response_hash = hashlib.sha256(response_text.encode("utf-8")).hexdigest()
        timestamp = datetime.now(timezone.utc).isoformat()
        with self._lock:
            ordinal = self._ordinal
            self._ordinal += 1
            with self.log_path.open("a", encoding="utf-8") as handle:
                handle.write(
                    f"{timestamp}\t{request.tag}\t{request_hash}\t{response_hash}\t{latency_ms}\n"
                )
        mirror = (
            f"TAG: {request.tag}\n"
            f"SYSTEM:\n{request.system}\n"
            f"USER:\n{request.user}\n"
            f"RESPONSE:\n{response_text}\n"
        )
        (self.mirror_dir / f"{ordinal:04d}.txt").write_text(mirror, encoding="utf-8")


class Gateway:
    """A backend plus an optional call log; the unit the pipeline passes around."""

    def __init__(self, backend: Backend, log: CallLog | None = None):
        self.backend = backend
        self.log = log

    def complete(self, request: ChatRequest) -> str:
        started = time.perf_counter()
        text = self.backend.complete(request)
        latency_ms = int((time.perf_counter() - started) * 1000)
        logger.debug("completed %s in %dms", request.tag, latency_ms)
        if self.log is not None:
            self.log.record(request, text, latency_ms)
        return text


T = TypeVar("T")

_REPAIR_SUFFIX = (
    "\n\nYour previous reply could not be parsed ({error}). "
    "Respond again using only the required format."
)


def complete_parsed(
    gateway: Gateway, request: ChatRequest, parser: Callable[[str], T]
) -> tuple[T, int]:
    """Run a call whose reply must parse, with exactly one repair retry.

    On a parse failure the request is re-issued once with the parse error
    appended to the user message; a second failure propagates.  Returns the
    parsed value and the number of calls made (1 or 2).
    """
    text = gateway.complete(request)
    try:
        return parser(text), 1
    except MalformedOutput as exc:
        logger.warning("repairing %s after parse failure: %s", request.tag, exc)
        repair = replace(request, user=request.user + _REPAIR_SUFFIX.format(error=exc))
        return parser(gateway.complete(repair)), 2


# -- wire-format parsers ------------------------------------------------------

_EVENT_FIELDS = ("description", "likelihood", "horizon", "impact", "parent_ids")
_STRATUM_FIELDS = ("descriptor", "impact", "likelihood")

_BUCKETS = {"low", "medium", "high"}
_HORIZONS = {"immediate", "short-term", "long-term"}


@dataclass(frozen=True)
class RawEvent:
    """An event as parsed off the wire, enums normalized but not yet typed."""

    description: str
    likelihood: str
    horizon: str
    impact: str
    parent_ids: tuple[str, ...]


@dataclass(frozen=True)
class RawStratum:
    descriptor: str
    impact: str
    likelihood: str


def _load_array(text: str) -> list:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedOutput(exc.pos, f"not valid JSON: {exc.msg}") from exc
    if not isinstance(data, list):
        raise MalformedOutput(0, "expected a JSON array")
    return data


def _check_fields(index: int, item: object, fields: tuple[str, ...]) -> dict:
    if not isinstance(item, dict):
        raise MalformedOutput(index, "array element is not an object")
    missing = [name for name in fields if name not in item]
    if missing:
        raise MalformedOutput(index, f"missing fields: {', '.join(missing)}")
    extra = [name for name in item if name not in fields]
    if extra:
        raise MalformedOutput(index, f"unexpected fields: {', '.join(extra)}")
    return item


def _enum_text(index: int, item: dict, name: str, allowed: set[str]) -> str:
    value = item[name]
    if not isinstance(value, str):
        raise MalformedOutput(index, f"{name} must be a string")
    normalized = value.strip().lower()
    if normalized not in allowed:
        raise MalformedOutput(index, f"{name} must be one of {sorted(allowed)}, got {value!r}")
    return normalized


def parse_event_batch(text: str) -> list[RawEvent]:
    """Parse the event array wire format; enum fields are case-normalized."""
    events: list[RawEvent] = []
    for index, item in enumerate(_load_array(text)):
        item = _check_fields(index, item, _EVENT_FIELDS)
        description = item["description"]
        if not isinstance(description, str) or not description.strip():
            raise MalformedOutput(index, "description must be a non-empty string")
        parent_ids = item["parent_ids"]
        if not isinstance(parent_ids, list) or not all(
            isinstance(p, str) for p in parent_ids
        ):
            raise MalformedOutput(index, "parent_ids must be a list of strings")
        events.append(
            RawEvent(
                description=description,
                likelihood=_enum_text(index, item, "likelihood", _BUCKETS),
                horizon=_enum_text(index, item, "horizon", _HORIZONS),
                impact=_enum_text(index, item, "impact", _BUCKETS),
                parent_ids=tuple(parent_ids),
            )
        )
    return events


def parse_stratum_batch(text: str) -> list[RawStratum]:
    """Parse the stratum array wire format (descriptor, impact, likelihood)."""
    strata: list[RawStratum] = []
    for index, item in enumerate(_load_array(text)):
        item = _check_fields(index, item, _STRATUM_FIELDS)
        descriptor = item["descriptor"]
        if not isinstance(descriptor, str) or not descriptor.strip():
            raise MalformedOutput(index, "descriptor must be a non-empty string")
        strata.append(
            RawStratum(
                descriptor=descriptor,
                impact=_enum_text(index, item, "impact", _BUCKETS),
                likelihood=_enum_text(index, item, "likelihood", _BUCKETS),
            )
        )
    return strata
