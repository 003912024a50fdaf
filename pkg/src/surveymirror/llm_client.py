"""Completion backends and the response cache.

``LLMClient`` wraps a backend (anything with ``model_id`` and
``complete(request)``) with a content-addressed cache and call counters.
``HttpBackend`` speaks the common chat-completions wire format; the offline
simulated respondent lives in :mod:`surveymirror.simulated`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import httpx

__all__ = [
    "DEFAULT_SYSTEM",
    "AuthenticationError",
    "BackendError",
    "CompletionRequest",
    "HttpBackend",
    "LLMClient",
    "MalformedResponseError",
    "RequestTag",
    "ResponseCache",
    "RetriesExhaustedError",
]

log = logging.getLogger(__name__)

DEFAULT_SYSTEM = "You answer survey questionnaires exactly as instructed."
RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


class BackendError(RuntimeError):
    pass


class AuthenticationError(BackendError):
    pass


class RetriesExhaustedError(BackendError):
    pass


class MalformedResponseError(BackendError):
    pass


@dataclass(frozen=True)
class RequestTag:
    respondent_id: str
    approach: str
    template_version: str


@dataclass(frozen=True)
class CompletionRequest:
    """One completion call.

    The cache key covers model, system text, prompt, temperature, template
    version and the respondent the request is made for. ``context`` carries the structured prompt record for offline backends;
    it is derived from the prompt and is not part of the cache key.
    """

    model: str
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 512
    tag: RequestTag | None = None
    system: str = DEFAULT_SYSTEM
    context: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.prompt or not self.prompt.strip():
            raise ValueError("prompt must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def fingerprint(self) -> dict:
        # the respondent is part of the key: identical prompts sent for two
        # respondents are two independent draws, not one cached answer
        return {
            "model": self.model,
            "respondent": self.tag.respondent_id if self.tag else None,
            "system": self.system,
            "prompt": self.prompt,
            "temperature": self.temperature,
            "template_version": self.tag.template_version if self.tag else None,
        }

    def cache_key(self) -> str:
        blob = json.dumps(self.fingerprint(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_prompt(self, prompt: str) -> "CompletionRequest":
        return replace(self, prompt=prompt)


class ResponseCache:
    """Directory of ``<sha256>.json`` files holding request, reply and timestamp."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, request: CompletionRequest) -> str | None:
        p = self.path(request.cache_key())
        try:
            doc = json.loads(p.read_text("utf-8"))
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, UnicodeDecodeError):
            log.warning("ignoring corrupt cache entry %s", p)
            return None
        return doc.get("reply")

    def put(self, request: CompletionRequest, reply: str) -> None:
        key = request.cache_key()
        doc = {"request": request.fingerprint(), "reply": reply, "timestamp": time.time()}
        with self._lock(key):
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1)
            os.replace(tmp, self.path(key))

    def __len__(self):
        return sum(1 for _ in self.directory.glob("*.json"))


class LLMClient:
    """Backend plus optional cache. Thread-safe."""

    def __init__(self, backend, cache: ResponseCache | None = None, temperature: float = 0.0,
                 max_tokens: int = 512):
        self.backend = backend
        self.cache = cache
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.hits = 0
        self.misses = 0
        self.backend_calls = 0
        self._count = threading.Lock()

    @property
    def model(self) -> str:
        return self.backend.model_id

    @property
    def identity(self) -> str:
        return getattr(self.backend, "identity", self.backend.model_id)

    def request(self, prompt: str, tag: RequestTag | None = None, context=None) -> CompletionRequest:
        return CompletionRequest(self.model, prompt, self.temperature, self.max_tokens, tag, context=context)

    def complete(self, request: CompletionRequest) -> str:
        if self.cache is not None:
            cached = self.cache.get(request)
            if cached is not None:
                with self._count:
                    self.hits += 1
                return cached
        with self._count:
            self.misses += 1
            self.backend_calls += 1
        reply = self.backend.complete(request)
        if self.cache is not None:
            self.cache.put(request, reply)
        return reply

    def stats(self) -> dict[str, int]:
        return {"cache_hits": self.hits, "cache_misses": self.misses, "backend_calls": self.backend_calls}


class HttpBackend:
    """Chat-completions endpoint with exponential backoff on transient errors.

    The API key is read from ``LLM_API_KEY`` unless given. ``transport`` and
    ``sleep`` are injectable for testing.
    """

    def __init__(self, model: str, base_url: str = "https://api.openai.com/v1", api_key: str | None = None,
                 timeout: float = 60.0, max_retries: int = 5, backoff_base: float = 1.0,
                 backoff_cap: float = 30.0, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, seed: int | None = None):
        self.model = model
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._sleep = sleep
        self._jitter = random.Random(seed)
        self._http = httpx.Client(timeout=timeout, transport=transport)

    @property
    def model_id(self) -> str:
        return self.model

    @property
    def identity(self) -> str:
        return f"http:{self.base_url}:{self.model}"

    def _delay(self, attempt: int, retry_after: str | None) -> float:
        if retry_after:
            try:
                return min(float(retry_after), self.backoff_cap)
            except ValueError:
                pass
        base = min(self.backoff_base * 2 ** attempt, self.backoff_cap)
        return self._jitter.uniform(base / 2, base)

    def complete(self, request: CompletionRequest) -> str:
        if not self.api_key:
            raise AuthenticationError("no API key: set LLM_API_KEY")
        payload = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last = None
        for attempt in range(self.max_retries + 1):
            retry_after = None
            try:
                resp = self._http.post(f"{self.base_url}/chat/completions", json=payload, headers=headers)
            except (httpx.TimeoutException, httpx.NetworkError) as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code in (401, 403):
                    raise AuthenticationError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                if resp.status_code == 200:
                    return self._content(resp)
                if resp.status_code not in RETRYABLE_STATUS:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                last = f"HTTP {resp.status_code}"
                retry_after = resp.headers.get("retry-after")
            if attempt < self.max_retries:
                delay = self._delay(attempt, retry_after)
                log.info("transient failure (%s); retrying in %.1fs", last, delay)
                self._sleep(delay)
        raise RetriesExhaustedError(f"giving up after {self.max_retries + 1} attempts: {last}")

    @staticmethod
    def _content(resp: httpx.Response) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected response body: {resp.text[:200]}") from exc
        if not isinstance(content, str):
            raise MalformedResponseError("message content is not text")
        return content

    def close(self):
        self._http.close()
