"""Minimal OpenAI-compatible chat-completions transport.

Handles a sliding-window per-minute request budget, a cap on in-flight
requests, jittered exponential backoff on 429/5xx/network errors, and writes
every exchange to a JSONL log before the response is parsed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence
from urllib.parse import parse_qs, urlparse

import httpx

from .sampling import SamplingConfig

log = logging.getLogger(__name__)

RULE_FIELDS = ("top_p", "min_p", "top_k")


class LlmError(RuntimeError):
    pass


class TransportError(LlmError):
    """Network failure or timeout after all transport retries."""


class HttpStatusError(LlmError):
    def __init__(self, status: int, body: str) -> None:
        super().__init__(f"HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class ParameterRejected(HttpStatusError):
    """The server refused a sampling field; the sweep marks the cell unsupported."""

    def __init__(self, status: int, body: str, parameter: str) -> None:
        super().__init__(status, body)
        self.parameter = parameter


class MalformedResponseError(LlmError):
    pass


class BudgetExhausted(LlmError):
    """The endpoint's total request budget is used up."""


@dataclass
class LlmEndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_in_flight: int = 4
    requests_per_minute: int = 60
    retries: int = 3
    backoff_base: float = 1.0
    backoff_max: float = 30.0
    max_tokens: int = 600
    max_requests: int | None = None
    log_path: str | None = None
    extra_headers: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValueError("endpoint.base_url is required")
        if not self.model:
            raise ValueError("endpoint.model is required")
        if not (self.timeout > 0):
            raise ValueError("endpoint.timeout must be > 0")
        if self.requests_per_minute < 1:
            raise ValueError("endpoint.requests_per_minute must be >= 1")
        if self.max_in_flight < 1:
            raise ValueError("endpoint.max_in_flight must be >= 1")
        if self.retries < 0:
            raise ValueError("endpoint.retries must be >= 0")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> LlmEndpointConfig:
        if "api_key" in data:
            raise ValueError("endpoint.api_key is not allowed; name an environment variable in endpoint.api_key_env")
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown endpoint key(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class RateLimiter:
    """At most ``per_minute`` acquisitions in any 60-second window."""

    def __init__(self, per_minute: int, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        self.per_minute = per_minute
        self.clock = clock
        self.sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until a slot is free; returns the seconds waited."""
        waited = 0.0
        while True:
            with self._lock:
                now = self.clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return waited
                delay = 60.0 - (now - self._stamps[0])
            self.sleep(delay)
            waited += delay


def mock_transport(url: str) -> httpx.MockTransport:
    """Offline endpoint for ``mock://`` base URLs.

    ``mock://constant?value=3`` answers every request with ``### 3``;
    ``reject=min_p,top_k`` makes it refuse those sampling fields with HTTP 400.
    """
    parsed = urlparse(url)
    qs = parse_qs(parsed.query)
    value = qs.get("value", ["1"])[0]
    rejected = {r for v in qs.get("reject", []) for r in v.split(",") if r}

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        for name in RULE_FIELDS:
            if name in body and name in rejected:
                return httpx.Response(400, json={"error": {"message": f"unsupported parameter: {name}"}})
        return httpx.Response(
            200,
            json={
                "id": "mock-" + hashlib.sha256(request.content).hexdigest()[:8],
                "choices": [{"message": {"role": "assistant", "content": f"### {value}"}}],
                "usage": {"prompt_tokens": 0, "completion_tokens": 2, "total_tokens": 2},
            },
        )

    return httpx.MockTransport(handler)


def _prompt_hash(messages: Sequence[dict[str, str]]) -> str:
    blob = json.dumps(list(messages), sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


class ChatClient:
    def __init__(
        self,
        config: LlmEndpointConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        rng: random.Random | None = None,
    ) -> None:
        self.config = config
        self.sleep = sleep
        self.rng = rng or random.Random(0)
        if transport is None and config.base_url.startswith("mock://"):
            transport = mock_transport(config.base_url)
            base = "http://mock.local"
        else:
            base = config.base_url.rstrip("/")
        headers = {"Content-Type": "application/json", **config.extra_headers}
        key = os.environ.get(config.api_key_env) if config.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(base_url=base, headers=headers, timeout=config.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._limiter = RateLimiter(config.requests_per_minute, clock=clock, sleep=sleep)
        self._log_lock = threading.Lock()
        self._count_lock = threading.Lock()
        self.requests_sent = 0
        self.backoff_events: list[dict[str, Any]] = []
        self.log_path = Path(config.log_path) if config.log_path else None

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> ChatClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # --------------------------------------------------------------------

    def _log(self, record: dict[str, Any]) -> None:
        if self.log_path is None:
            return
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._log_lock:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def _backoff(self, attempt: int) -> float:
        delay = min(self.config.backoff_max, self.config.backoff_base * 2**attempt)
        return delay * (0.5 + 0.5 * self.rng.random())

    def _reserve_request(self) -> None:
        with self._count_lock:
            if self.config.max_requests is not None and self.requests_sent >= self.config.max_requests:
                raise BudgetExhausted(f"request budget of {self.config.max_requests} used up")
            self.requests_sent += 1

    def build_body(self, messages: Sequence[dict[str, str]], sampling: SamplingConfig, max_tokens: int | None) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.config.model,
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "max_tokens": max_tokens or self.config.max_tokens,
        }
        params = sampling.request_params()
        assert sum(1 for k in RULE_FIELDS if k in params) <= 1
        body.update(params)
        return body

    def chat_complete(
        self,
        messages: Sequence[dict[str, str]],
        sampling: SamplingConfig,
        max_tokens: int | None = None,
    ) -> str:
        body = self.build_body(messages, sampling, max_tokens)
        phash = _prompt_hash(messages)
        last_error: LlmError | None = None
        for attempt in range(self.config.retries + 1):
            self._reserve_request()
            self._limiter.acquire()
            start = time.perf_counter()
            with self._slots:
                try:
                    resp = self._http.post("/chat/completions", json=body)
                except httpx.HTTPError as exc:
                    latency = (time.perf_counter() - start) * 1000.0
                    self._log({"ts": time.time(), "model": self.config.model, "sampling": sampling.to_dict(),
                               "prompt_hash": phash, "response": None, "error": repr(exc),
                               "latency_ms": latency, "usage": None, "attempt": attempt})
                    last_error = TransportError(str(exc) or exc.__class__.__name__)
                    self._retry_wait(attempt, f"transport error: {exc!r}")
                    continue
            latency = (time.perf_counter() - start) * 1000.0
            text = resp.text
            record = {"ts": time.time(), "model": self.config.model, "sampling": sampling.to_dict(),
                      "prompt_hash": phash, "status": resp.status_code, "latency_ms": latency, "attempt": attempt,
                      "request_id": resp.headers.get("x-request-id")}
            if resp.status_code == 429 or resp.status_code >= 500:
                self._log({**record, "response": text, "usage": None})
                last_error = HttpStatusError(resp.status_code, text)
                self._retry_wait(attempt, f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                self._log({**record, "response": text, "usage": None})
                if sampling.rule in RULE_FIELDS and resp.status_code in (400, 422) and sampling.rule in text:
                    raise ParameterRejected(resp.status_code, text, sampling.rule)
                raise HttpStatusError(resp.status_code, text)
            try:
                payload = resp.json()
                content = payload["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                self._log({**record, "response": text, "usage": None})
                raise MalformedResponseError(f"unexpected response shape: {exc!r}") from exc
            self._log({**record, "response": content, "usage": payload.get("usage"),
                       "request_id": record["request_id"] or payload.get("id")})
            return content if isinstance(content, str) else ""
        assert last_error is not None
        raise last_error

    def _retry_wait(self, attempt: int, reason: str) -> None:
        if attempt >= self.config.retries:
            return
        delay = self._backoff(attempt)
        self.backoff_events.append({"attempt": attempt, "delay": delay, "reason": reason})
        log.warning("retrying after %s (attempt %d, sleeping %.2fs)", reason, attempt + 1, delay)
        self.sleep(delay)
