"""Chat-completion backends.

Every backend exposes ``complete(ChatRequest) -> ChatResponse`` and keeps an
audit log of the exchanges it served. Two real implementations ship here:

* :class:`OpenAICompatibleBackend` talks to any ``/chat/completions`` endpoint.
* :class:`ScriptedBackend` replays canned responses keyed by ``(tag, index)``
  so orchestration runs are reproducible offline.

:class:`FunctionBackend` wraps a plain callable and is handy for mocks.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import httpx

from .domain import ChatMessage, check_message_list

log = logging.getLogger(__name__)

API_KEY_ENV = "AGENTCOLLAB_API_KEY"
BASE_URL_ENV = "AGENTCOLLAB_BASE_URL"

_TOKEN_RE = re.compile(r"\S+")


class BackendError(Exception):
    pass


class TransportError(BackendError):
    """The endpoint could not be reached or kept failing after retries."""


class ScriptExhausted(BackendError):
    """A scripted backend has no entry for the requested tag/index."""


class BudgetZero(BackendError, ValueError):
    """A request asked for zero output tokens."""


class FixtureParseError(ValueError):
    pass


def count_tokens(text: str) -> int:
    """Whitespace-delimited word count. Deterministic and monotone under concatenation."""
    return len(_TOKEN_RE.findall(text))


def truncate_tokens(text: str, limit: int) -> str:
    """Keep the first ``limit`` whitespace tokens of ``text``, preserving original spacing."""
    if limit <= 0:
        return ""
    for i, m in enumerate(_TOKEN_RE.finditer(text), start=1):
        if i == limit:
            return text[: m.end()]
    return text


class Finish(str, enum.Enum):
    COMPLETE = "Complete"
    LENGTH_CAPPED = "LengthCapped"
    ERROR = "Error"


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    max_tokens: int
    temperature: float = 0.0
    model_id: str = ""
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        check_message_list(self.messages)
        if self.max_tokens == 0:
            raise BudgetZero("max_tokens is 0; nothing can be generated")
        if self.max_tokens < 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    tokens_out: int
    tokens_in: int
    finish: Finish = Finish.COMPLETE


@dataclass(frozen=True)
class AuditRecord:
    tag: str
    request: ChatRequest
    response: ChatResponse


class ChatBackend:
    """Base class: subclasses implement :meth:`_generate`."""

    #: how far past ``max_tokens`` a response may run (tokenizer disagreement)
    slack_tokens = 0

    def __init__(self, counter: Callable[[str], int] = count_tokens):
        self.counter = counter
        self.audit: list[AuditRecord] = []
        self._audit_lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        if request.max_tokens <= 0:
            raise BudgetZero("max_tokens is 0; nothing can be generated")
        response = self._generate(request)
        with self._audit_lock:
            self.audit.append(AuditRecord(request.tag, request, response))
        return response

    def _generate(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def prompt_tokens(self, request: ChatRequest) -> int:
        return sum(self.counter(m.content) for m in request.messages)


class ScopedBackend:
    """Prefixes request tags with ``scope/`` before delegating.

    Used to give each question its own script namespace. The scripted backend
    falls back to the bare tag when no scoped entry exists.
    """

    def __init__(self, inner, scope: str):
        self.inner = inner
        self.scope = scope

    @property
    def audit(self):
        return self.inner.audit

    @property
    def counter(self):
        return getattr(self.inner, "counter", count_tokens)

    def complete(self, request: ChatRequest) -> ChatResponse:
        tag = f"{self.scope}/{request.tag}" if request.tag else self.scope
        return self.inner.complete(
            ChatRequest(request.messages, request.max_tokens, request.temperature, request.model_id, tag)
        )


@dataclass(frozen=True)
class ScriptEntry:
    tag: str
    index: int
    content: str
    tokens_out: Optional[int] = None


class ScriptedBackend(ChatBackend):
    """Replays responses keyed by ``(tag, per-tag call index)``.

    A tag of the form ``scope/name`` is looked up verbatim first; when the
    script has no entries at all under that exact tag, the bare ``name`` is
    used instead and shares that tag's cursor.
    """

    def __init__(self, entries: Sequence[ScriptEntry] = (), counter: Callable[[str], int] = count_tokens):
        super().__init__(counter)
        self._entries: dict[tuple[str, int], ScriptEntry] = {}
        for e in entries:
            key = (e.tag, e.index)
            if key in self._entries:
                raise FixtureParseError(f"duplicate script entry for tag={e.tag!r} index={e.index}")
            self._entries[key] = e
        self._tags = {e.tag for e in entries}
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def reset(self) -> None:
        with self._lock:
            self._cursor.clear()
        with self._audit_lock:
            self.audit.clear()

    def _resolve_tag(self, tag: str) -> str:
        if tag in self._tags or "/" not in tag:
            return tag
        return tag.rsplit("/", 1)[1]

    def _generate(self, request: ChatRequest) -> ChatResponse:
        tag = self._resolve_tag(request.tag)
        with self._lock:
            index = self._cursor.get(tag, 0)
            entry = self._entries.get((tag, index))
            if entry is None:
                raise ScriptExhausted(f"no scripted response for tag={request.tag!r} index={index}")
            self._cursor[tag] = index + 1
        content = entry.content
        tokens_out = entry.tokens_out if entry.tokens_out is not None else self.counter(content)
        finish = Finish.COMPLETE
        if tokens_out > request.max_tokens:
            content = truncate_tokens(content, request.max_tokens)
            tokens_out = request.max_tokens
            finish = Finish.LENGTH_CAPPED
        return ChatResponse(content, tokens_out, self.prompt_tokens(request), finish)


def load_script(path) -> ScriptedBackend:
    """Build a :class:`ScriptedBackend` from a JSON-lines fixture.

    Each non-blank line is ``{"tag": str, "index": int, "content": str,
    "tokens_out": int}``; ``tokens_out`` may be omitted.
    """
    path = Path(path)
    entries = []
    seen: dict[tuple[str, int], int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FixtureParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise FixtureParseError(f"{path}:{lineno}: expected an object")
            for name, kind in (("tag", str), ("index", int), ("content", str)):
                if name not in rec:
                    raise FixtureParseError(f"{path}:{lineno}: missing field {name!r}")
                if not isinstance(rec[name], kind) or isinstance(rec[name], bool):
                    raise FixtureParseError(f"{path}:{lineno}: field {name!r} must be {kind.__name__}")
            tokens_out = rec.get("tokens_out")
            if tokens_out is not None and (not isinstance(tokens_out, int) or tokens_out < 0):
                raise FixtureParseError(f"{path}:{lineno}: field 'tokens_out' must be a non-negative int")
            if rec["index"] < 0:
                raise FixtureParseError(f"{path}:{lineno}: field 'index' must be >= 0")
            key = (rec["tag"], rec["index"])
            if key in seen:
                raise FixtureParseError(
                    f"{path}:{lineno}: duplicate (tag, index) {key}, first defined on line {seen[key]}"
                )
            seen[key] = lineno
            entries.append(ScriptEntry(rec["tag"], rec["index"], rec["content"], tokens_out))
    return ScriptedBackend(entries)


def dump_script(entries: Sequence[ScriptEntry], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for e in entries:
            rec = {"tag": e.tag, "index": e.index, "content": e.content}
            if e.tokens_out is not None:
                rec["tokens_out"] = e.tokens_out
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


class FunctionBackend(ChatBackend):
    """Backend whose replies come from ``fn(request) -> str``."""

    def __init__(self, fn: Callable[[ChatRequest], str], counter: Callable[[str], int] = count_tokens):
        super().__init__(counter)
        self.fn = fn
        self._lock = threading.Lock()

    def _generate(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            content = self.fn(request)
        tokens_out = self.counter(content)
        finish = Finish.COMPLETE
        if tokens_out > request.max_tokens:
            content = truncate_tokens(content, request.max_tokens)
            tokens_out = request.max_tokens
            finish = Finish.LENGTH_CAPPED
        return ChatResponse(content, tokens_out, self.prompt_tokens(request), finish)


_RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class OpenAICompatibleBackend(ChatBackend):
    """Client for an OpenAI-style ``POST {base_url}/chat/completions`` endpoint."""

    # provider tokenizers disagree with the whitespace estimate
    slack_tokens = 64

    def __init__(
        self,
        base_url: Optional[str] = None,
        model_id: str = "",
        api_key: Optional[str] = None,
        retry_limit: int = 3,
        backoff: float = 1.0,
        timeout: float = 600.0,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        counter: Callable[[str], int] = count_tokens,
    ):
        super().__init__(counter)
        base_url = base_url or os.environ.get(BASE_URL_ENV)
        if not base_url:
            raise ValueError(f"no base URL given and {BASE_URL_ENV} is unset")
        if not model_id:
            raise ValueError("model_id is required for the remote backend")
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.retry_limit = retry_limit
        self.backoff = backoff
        self._sleep = sleep
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def payload(self, request: ChatRequest) -> dict:
        return {
            "model": request.model_id or self.model_id,
            "messages": [m.to_dict() for m in request.messages],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }

    def _generate(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/chat/completions"
        body = self.payload(request)
        last_error = None
        for attempt in range(self.retry_limit + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=body)
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                log.warning("chat request %s failed (attempt %d): %s", request.tag, attempt + 1, last_error)
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                log.warning("chat request %s got %s (attempt %d)", request.tag, last_error, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            return self._parse(request, resp)
        raise TransportError(f"{url} failed after {self.retry_limit + 1} attempts: {last_error}")

    def _parse(self, request: ChatRequest, resp: httpx.Response) -> ChatResponse:
        try:
            data = resp.json()
            choice = data["choices"][0]
            message = choice.get("message") or {}
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        content = message.get("content")
        reasoning = message.get("reasoning_content")
        if content is None:
            return ChatResponse("", 0, self.prompt_tokens(request), Finish.ERROR)
        # servers that split reasoning out of the content field
        if reasoning and "<think>" not in content:
            content = f"<think>\n{reasoning}\n</think>\n{content}"
        usage = data.get("usage") or {}
        tokens_out = usage.get("completion_tokens")
        tokens_in = usage.get("prompt_tokens")
        if tokens_out is None:
            tokens_out = self.counter(content)
        if tokens_in is None:
            tokens_in = self.prompt_tokens(request)
        finish = Finish.LENGTH_CAPPED if choice.get("finish_reason") == "length" else Finish.COMPLETE
        return ChatResponse(content, int(tokens_out), int(tokens_in), finish)
