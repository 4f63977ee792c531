"""Chat-completion clients: a cached HTTP client plus scripted test doubles.

Every request is content-addressed by a canonical hash of
(model id, messages, temperature), which drives both the on-disk response
cache and hash-keyed scripted clients. With the cache warm, a pipeline rerun
touches the network zero times.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from detailscribe import DetailScribeError

logger = logging.getLogger(__name__)

ENV_ENDPOINT = "MODEL_ENDPOINT"
ENV_API_KEY = "MODEL_API_KEY"
ENV_MODEL_ID = "MODEL_ID"
ENV_MLLM_MODEL_ID = "MLLM_MODEL_ID"


class ClientError(DetailScribeError):
    """Non-retryable client failure (bad request, capability mismatch, 4xx)."""


class Timeout(ClientError):
    """Transport timed out after exhausting retries."""


class RateLimited(ClientError):
    """Provider kept returning 429 after exhausting retries."""


class ScriptExhausted(DetailScribeError):
    """A scripted client ran out of queued responses."""


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    media_type: str
    data: bytes


Part = TextPart | ImagePart


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]


def text_message(role: str, text: str) -> Message:
    return Message(role=role, parts=(TextPart(text),))


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call: ordered role-tagged messages plus sampling knobs.

    ``temperature=None`` leaves the provider default in place.
    """

    messages: tuple[Message, ...]
    temperature: float | None = None
    model_id: str = ""
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.messages:
            raise ClientError("request has no messages")
        if self.temperature is not None and self.temperature < 0:
            raise ClientError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ClientError("max_tokens must be positive")

    def has_images(self) -> bool:
        return any(isinstance(p, ImagePart) for m in self.messages for p in m.parts)

    def text(self) -> str:
        """All text parts joined, in order. Convenient for assertions."""
        return "\n".join(
            p.text for m in self.messages for p in m.parts if isinstance(p, TextPart)
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict = field(default_factory=dict)
    latency: float = 0.0
    cached: bool = False


def request_hash(request: ChatRequest) -> str:
    """Canonical content hash of (model_id, messages, temperature).

    Image payloads enter via their own sha256 digest, so the hash is stable
    under any serialization that preserves message order.
    """
    canon: dict = {
        "model_id": request.model_id,
        "temperature": request.temperature,
        "messages": [],
    }
    for m in request.messages:
        parts = []
        for p in m.parts:
            if isinstance(p, TextPart):
                parts.append({"type": "text", "text": p.text})
            else:
                parts.append(
                    {
                        "type": "image",
                        "media_type": p.media_type,
                        "sha256": hashlib.sha256(p.data).hexdigest(),
                    }
                )
        canon["messages"].append({"role": m.role, "parts": parts})
    blob = json.dumps(canon, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class ChatClient(ABC):
    """Uniform surface over hosted and scripted chat models."""

    model_id: str = ""
    multimodal: bool = True

    @abstractmethod
    def complete(self, request: ChatRequest) -> ChatResponse:
        """Return the model's text for ``request``."""


class TokenBucket:
    """Simple token bucket; acquire() blocks until a token is available."""

    def __init__(self, rate_per_second: float, capacity: int = 4) -> None:
        self.rate = rate_per_second
        self.capacity = float(capacity)
        self._tokens = float(capacity)
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


def _default_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.Timeout as exc:
        raise TimeoutError(str(exc)) from exc
    body: object
    try:
        body = resp.json()
    except ValueError:
        body = resp.text
    return resp.status_code, body


class HttpChatClient(ChatClient):
    """Chat-completion HTTP client with retry, rate limiting, and a response cache.

    The transport is injectable for tests: a callable
    ``(url, headers, payload, timeout) -> (status_code, body)`` that raises
    ``TimeoutError`` on transport timeouts.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        model_id: str = "",
        cache_dir: str | os.PathLike | None = None,
        transport: Callable | None = None,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        rate_per_second: float | None = None,
        sleeper: Callable[[float], None] = time.sleep,
        multimodal: bool = True,
    ) -> None:
        self.endpoint = endpoint
        self.api_key = api_key
        self.model_id = model_id
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.transport = transport or _default_transport
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.multimodal = multimodal
        self._bucket = TokenBucket(rate_per_second) if rate_per_second else None
        self._sleep = sleeper

    @classmethod
    def from_env(cls, multimodal: bool = False, cache_dir: str | None = None) -> "HttpChatClient":
        endpoint = os.environ.get(ENV_ENDPOINT, "")
        if not endpoint:
            raise ClientError(f"{ENV_ENDPOINT} is not set")
        model_var = ENV_MLLM_MODEL_ID if multimodal else ENV_MODEL_ID
        return cls(
            endpoint=endpoint,
            api_key=os.environ.get(ENV_API_KEY, ""),
            model_id=os.environ.get(model_var, ""),
            cache_dir=cache_dir,
            multimodal=multimodal,
        )

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{key}.json"

    def _cache_read(self, key: str) -> ChatResponse | None:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        entry = json.loads(path.read_text(encoding="utf-8"))
        return ChatResponse(text=entry["text"], usage=entry.get("usage", {}), cached=True)

    def _cache_write(self, key: str, response: ChatResponse) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            {"text": response.text, "usage": response.usage}, ensure_ascii=False
        )
        # write-temp-then-rename keeps concurrent readers safe
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(payload)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def _payload(self, request: ChatRequest) -> dict:
        messages = []
        for m in request.messages:
            content = []
            for p in m.parts:
                if isinstance(p, TextPart):
                    content.append({"type": "text", "text": p.text})
                else:
                    b64 = base64.b64encode(p.data).decode("ascii")
                    content.append(
                        {
                            "type": "image_url",
                            "image_url": {"url": f"data:{p.media_type};base64,{b64}"},
                        }
                    )
            messages.append({"role": m.role, "content": content})
        payload: dict = {
            "model": request.model_id or self.model_id,
            "messages": messages,
            "max_tokens": request.max_tokens,
        }
        if request.temperature is not None:
            payload["temperature"] = request.temperature
        return payload

    def complete(self, request: ChatRequest) -> ChatResponse:
        if request.has_images() and not self.multimodal:
            raise ClientError("client is text-only but the request carries an image")
        key = request_hash(request)
        cached = self._cache_read(key)
        if cached is not None:
            return cached

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = self._payload(request)

        last_failure = "no attempt made"
        started = time.monotonic()
        for attempt in range(self.max_retries + 1):
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                status, body = self.transport(self.endpoint, headers, payload, self.timeout)
            except TimeoutError as exc:
                last_failure = f"timeout: {exc}"
                self._backoff(attempt)
                continue
            if status == 429:
                last_failure = "rate limited (429)"
                self._backoff(attempt)
                continue
            if status >= 500:
                last_failure = f"server error ({status})"
                self._backoff(attempt)
                continue
            if status >= 400:
                raise ClientError(f"request rejected ({status}): {body}")
            text = self._extract_text(body)
            usage = body.get("usage", {}) if isinstance(body, dict) else {}
            response = ChatResponse(
                text=text, usage=usage, latency=time.monotonic() - started
            )
            self._cache_write(key, response)
            return response

        if "timeout" in last_failure:
            raise Timeout(last_failure)
        if "rate limited" in last_failure:
            raise RateLimited(last_failure)
        raise ClientError(f"gave up after {self.max_retries + 1} attempts: {last_failure}")

    def _backoff(self, attempt: int) -> None:
        if attempt < self.max_retries:
            self._sleep(self.backoff_base * (2**attempt))

    @staticmethod
    def _extract_text(body: object) -> str:
        if isinstance(body, dict):
            choices = body.get("choices")
            if choices:
                message = choices[0].get("message", {})
                content = message.get("content", "")
                if isinstance(content, str):
                    return content
            if "text" in body:
                return str(body["text"])
        raise ClientError(f"response has no text: {body!r}")


class ScriptedChatClient(ChatClient):
    """Deterministic test double.

    ``script`` is either an ordered sequence of response texts (served FIFO)
    or a mapping from request hash to response text. Every request seen is
    recorded on ``requests`` for later assertions.
    """

    def __init__(
        self,
        script: Sequence[str] | Mapping[str, str],
        model_id: str = "scripted",
        multimodal: bool = True,
    ) -> None:
        self.model_id = model_id
        self.multimodal = multimodal
        self.requests: list[ChatRequest] = []
        self._by_hash: dict[str, str] | None = None
        self._queue: deque[str] | None = None
        if isinstance(script, Mapping):
            self._by_hash = dict(script)
        else:
            self._queue = deque(script)
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            if request.has_images() and not self.multimodal:
                raise ClientError("client is text-only but the request carries an image")
            if self._by_hash is not None:
                key = request_hash(request)
                if key not in self._by_hash:
                    raise ScriptExhausted(f"no scripted response for request {key[:12]}")
                return ChatResponse(text=self._by_hash[key])
            assert self._queue is not None
            if not self._queue:
                raise ScriptExhausted("scripted responses exhausted")
            return ChatResponse(text=self._queue.popleft())
