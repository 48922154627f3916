"""Chat-completion backends: an HTTP client with retry/backoff and a scripted mock."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import requests

from .schema import estimate_tokens

logger = logging.getLogger(__name__)

DEFAULT_CONTEXT_WINDOW = 32768
SCRIPT_ENTRY_PREFIX = "### MATCH:"


class BackendUnavailable(Exception):
    """The HTTP backend failed permanently (retries exhausted or fatal status)."""


class ScriptMiss(Exception):
    """A scripted backend had no (or no unique) entry for the request."""


@dataclass
class ChatRequest:
    user_text: str
    system_text: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 1024
    model_name: str = ""


@dataclass
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0


def _require_user_text(request: ChatRequest) -> None:
    if not request.user_text:
        raise ValueError("ChatRequest.user_text must be nonempty")


class ScriptedBackend:
    """Deterministic backend replaying canned responses by substring match.

    Entries are (needle, response) pairs matched against the request's user
    text. In strict mode exactly one entry must match; otherwise the first
    matching entry wins. Replies are pure: identical requests always produce
    identical responses.
    """

    def __init__(self, entries: Sequence[tuple[str, str]], strict: bool = False,
                 context_window: int = DEFAULT_CONTEXT_WINDOW):
        self.entries = list(entries)
        self.strict = strict
        self.context_window = context_window

    @classmethod
    def from_file(cls, path: str, strict: bool = False,
                  context_window: int = DEFAULT_CONTEXT_WINDOW) -> "ScriptedBackend":
        """Load matcher/response pairs from a plain-text fixture file.

        Each entry starts with a line ``### MATCH: <needle>``; the response is
        everything up to the next entry, with one trailing newline stripped.
        """
        entries: list[tuple[str, str]] = []
        needle = None
        lines: list[str] = []
        for raw in Path(path).read_text(encoding="utf-8").splitlines(keepends=True):
            if raw.startswith(SCRIPT_ENTRY_PREFIX):
                if needle is not None:
                    entries.append((needle, "".join(lines).rstrip("\n")))
                needle = raw[len(SCRIPT_ENTRY_PREFIX):].strip()
                lines = []
            elif needle is not None:
                lines.append(raw)
        if needle is not None:
            entries.append((needle, "".join(lines).rstrip("\n")))
        return cls(entries, strict=strict, context_window=context_window)

    def complete(self, request: ChatRequest) -> ChatResponse:
        _require_user_text(request)
        hits = [resp for needle, resp in self.entries if needle in request.user_text]
        if self.strict and len(hits) != 1:
            raise ScriptMiss(f"strict script expected exactly one match, got {len(hits)}")
        if not hits:
            raise ScriptMiss("no script entry matches the request")
        text = hits[0]
        return ChatResponse(
            text=text,
            prompt_tokens=estimate_tokens(request.system_text + request.user_text),
            completion_tokens=estimate_tokens(text),
            latency=0.0,
        )


class HttpBackend:
    """Client for any endpoint speaking the common chat-completion protocol.

    Transient failures (timeouts, connection errors, 429, 5xx) are retried
    with exponential backoff up to ``max_attempts`` total attempts; anything
    else raises BackendUnavailable immediately. The bearer token is read from
    the environment at request time so credentials never live in config files.
    """

    def __init__(self, endpoint: str, model: str = "gpt-4",
                 api_key_env: str = "LLM_API_KEY",
                 context_window: int = DEFAULT_CONTEXT_WINDOW,
                 max_attempts: int = 3, base_delay: float = 1.0,
                 request_timeout: float = 120.0,
                 max_in_flight: Optional[int] = None,
                 session=None,
                 sleep: Callable[[float], None] = time.sleep,
                 clock: Callable[[], float] = time.monotonic):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.context_window = context_window
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self.request_timeout = request_timeout
        self._session = session or requests.Session()
        self._sleep = sleep
        self._clock = clock
        self._gate = threading.BoundedSemaphore(max_in_flight) if max_in_flight else None

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, request: ChatRequest) -> dict:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        return {
            "model": request.model_name or self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    def complete(self, request: ChatRequest) -> ChatResponse:
        _require_user_text(request)
        if self._gate is not None:
            with self._gate:
                return self._complete(request)
        return self._complete(request)

    def _complete(self, request: ChatRequest) -> ChatResponse:
        start = self._clock()
        payload = self._payload(request)
        last_error = ""
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._session.post(self.endpoint, json=payload,
                                          headers=self._headers(),
                                          timeout=self.request_timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    logger.info("chat completion ok after %d attempt(s)", attempt)
                    return self._parse(request, resp, self._clock() - start)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                else:
                    raise BackendUnavailable(
                        f"HTTP {resp.status_code}: {resp.text[:500]}")
            if attempt < self.max_attempts:
                self._sleep(self.base_delay * 2 ** (attempt - 1))
        logger.warning("chat completion failed after %d attempt(s): %s",
                       self.max_attempts, last_error)
        raise BackendUnavailable(
            f"giving up after {self.max_attempts} attempts: {last_error}")

    def _parse(self, request: ChatRequest, resp, latency: float) -> ChatResponse:
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed completion response: {exc}") from exc
        usage = data.get("usage") or {}
        return ChatResponse(
            text=text,
            prompt_tokens=usage.get("prompt_tokens",
                                    estimate_tokens(request.system_text + request.user_text)),
            completion_tokens=usage.get("completion_tokens", estimate_tokens(text)),
            latency=latency,
        )
