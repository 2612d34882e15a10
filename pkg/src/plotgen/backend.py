"""Chat-completion backends: HTTP wire client, deterministic scripted double,
rate limiting, retries, and per-stage call accounting."""

from __future__ import annotations

import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, IO, Optional, Pattern, Protocol, Sequence, Union

import httpx

from . import prompts

STAGES = (
    "premise",
    "setting",
    "character_name",
    "character_portrait",
    "top_outline",
    "sub_outline",
    "annotation",
    "judge",
)


class BackendError(Exception):
    """Base class for generation failures."""


class TransportError(BackendError):
    """Network-level failure; retried up to the configured budget."""


class AuthError(BackendError):
    """Credential rejection; never retried."""


class FormatError(BackendError):
    """Response body did not contain candidate texts."""


class UnmatchedPromptError(BackendError):
    """A scripted backend received a prompt no rule matches."""

    def __init__(self, prompt: str) -> None:
        super().__init__(f"no scripted rule matches prompt: {prompt[:200]!r}")
        self.prompt = prompt


@dataclass(frozen=True)
class GenerationRequest:
    user: str
    system: Optional[str] = None
    max_tokens: int = 512
    temperature: float = 0.9
    n_candidates: int = 1
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("user prompt must be non-empty")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if len(self.stop_sequences) > 4:
            raise ValueError("at most 4 stop sequences")


@dataclass(frozen=True)
class GenerationResult:
    candidates: tuple[str, ...]
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model_name: str
    api_key_env: str = "PLOTGEN_API_KEY"
    requests_per_minute: int = 60
    max_retries: int = 3
    retry_backoff: float = 1.0

    def __post_init__(self) -> None:
        if self.requests_per_minute < 1:
            raise ValueError("requests_per_minute must be >= 1")
        if not 0 <= self.max_retries <= 10:
            raise ValueError("max_retries must be in 0..10")


class CallLedger:
    """Thread-safe per-stage call counter that also records chronology.

    One increment per API call (a single call may carry several sampled
    candidates); ``sequence`` is the stage name of every call in order,
    which is what the breadth-first-ordering checks read.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}
        self._sequence: list[str] = []

    def record(self, stage: str) -> None:
        with self._lock:
            self._counts[stage] = self._counts.get(stage, 0) + 1
            self._sequence.append(stage)

    @property
    def total_calls(self) -> int:
        with self._lock:
            return sum(self._counts.values())

    @property
    def per_stage_calls(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)

    @property
    def sequence(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(self._sequence)

    def snapshot(self) -> dict[str, object]:
        with self._lock:
            return {
                "total_calls": sum(self._counts.values()),
                "per_stage_calls": dict(self._counts),
                "sequence": list(self._sequence),
            }


class Clock(Protocol):
    def time(self) -> float: ...
    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def time(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class FakeClock:
    """Deterministic clock for rate-limit and retry tests."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = start
        self._lock = threading.Lock()

    def time(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self._now += max(seconds, 0.0)


class RateLimiter:
    """Client-side sliding window: at most ``rpm`` calls initiated in any 60 s.

    Only the admission decision is serialized; callers sleep outside the
    lock, so a slow network wait never blocks other workers' admissions.
    """

    WINDOW = 60.0

    def __init__(self, rpm: int, clock: Clock = SystemClock()) -> None:
        if rpm < 1:
            raise ValueError("rpm must be >= 1")
        self.rpm = rpm
        self.clock = clock
        self._lock = threading.Lock()
        self._starts: deque[float] = deque()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock.time()
                while self._starts and now - self._starts[0] >= self.WINDOW:
                    self._starts.popleft()
                if len(self._starts) < self.rpm:
                    self._starts.append(now)
                    return
                wait = self._starts[0] + self.WINDOW - now
            self.clock.sleep(wait)


class Backend(Protocol):
    """One raw completion attempt; retries and accounting live in chat_generate."""

    def complete(self, req: GenerationRequest) -> GenerationResult: ...


@dataclass
class ScriptRule:
    """Substring (or regex) matcher over the user prompt plus a cyclic
    response list."""

    matcher: Union[str, Pattern[str]]
    responses: list[str]
    _index: int = field(default=0, repr=False)

    def matches(self, prompt: str) -> bool:
        if isinstance(self.matcher, str):
            return self.matcher in prompt
        return self.matcher.search(prompt) is not None

    def next_response(self) -> str:
        resp = self.responses[self._index % len(self.responses)]
        self._index += 1
        return resp


class ScriptedBackend:
    """Deterministic test double: the first matching rule answers with its
    next response in cycle; unmatched prompts raise so test scripts must be
    exhaustive."""

    def __init__(self, rules: Sequence[ScriptRule]) -> None:
        if not rules:
            raise ValueError("at least one rule required")
        self.rules = list(rules)
        self.calls: list[GenerationRequest] = []
        self._lock = threading.Lock()

    def complete(self, req: GenerationRequest) -> GenerationResult:
        with self._lock:
            self.calls.append(req)
            for rule in self.rules:
                if rule.matches(req.user):
                    texts = tuple(rule.next_response() for _ in range(req.n_candidates))
                    return GenerationResult(candidates=texts)
            raise UnmatchedPromptError(req.user)


def scripted_backend(rules: Sequence[dict | ScriptRule]) -> ScriptedBackend:
    """Build a scripted backend from rule dicts ({"match"|"match_re", "responses"})."""
    built: list[ScriptRule] = []
    for rule in rules:
        if isinstance(rule, ScriptRule):
            built.append(rule)
        elif "match_re" in rule:
            built.append(ScriptRule(re.compile(rule["match_re"], re.S), list(rule["responses"])))
        else:
            built.append(ScriptRule(rule["match"], list(rule["responses"])))
    return ScriptedBackend(built)


class FailingBackend:
    """Wraps a backend to fail with TransportError for the first N calls."""

    def __init__(self, inner: Backend, failures: int) -> None:
        self.inner = inner
        self.failures = failures
        self.attempts = 0

    def complete(self, req: GenerationRequest) -> GenerationResult:
        self.attempts += 1
        if self.attempts <= self.failures:
            raise TransportError(f"injected failure {self.attempts}")
        return self.inner.complete(req)


class HttpBackend:
    """Client for any endpoint speaking the common chat-completions protocol."""

    def __init__(
        self,
        config: BackendConfig,
        transport: Optional[httpx.BaseTransport] = None,
        timeout: float = 120.0,
        clock: Clock = SystemClock(),
    ) -> None:
        self.config = config
        self.limiter = RateLimiter(config.requests_per_minute, clock=clock)
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"), transport=transport, timeout=timeout
        )

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, req: GenerationRequest) -> GenerationResult:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        body = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": req.temperature,
            "n": req.n_candidates,
            "max_tokens": req.max_tokens,
        }
        if req.stop_sequences:
            body["stop"] = list(req.stop_sequences)
        try:
            resp = self._client.post("/chat/completions", json=body, headers=self._headers())
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"credentials rejected ({resp.status_code})")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
            choices = payload["choices"]
            texts = tuple(choice["message"]["content"] for choice in choices)
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"response lacks candidate texts: {exc}") from exc
        if not texts or any(t is None for t in texts):
            raise FormatError("response lacks candidate texts")
        usage = payload.get("usage") or {}
        return GenerationResult(
            candidates=texts,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )

    def close(self) -> None:
        self._client.close()


def chat_generate(
    backend: Backend,
    req: GenerationRequest,
    stage: str,
    ledger: CallLedger,
    *,
    limiter: Optional[RateLimiter] = None,
    max_retries: Optional[int] = None,
    retry_backoff: Optional[float] = None,
    clock: Clock = SystemClock(),
    log_sink: Optional[IO[str]] = None,
) -> GenerationResult:
    """One logical generation call: rate-limited, retried on transport
    errors with exponential backoff, and counted once in the ledger
    regardless of candidate width or retries.

    Retry policy and limiter default to the backend's own configuration
    when it carries one (the HTTP client does); the scripted double has
    neither, so tests run unthrottled.
    """
    backend_config = getattr(backend, "config", None)
    if max_retries is None:
        max_retries = backend_config.max_retries if backend_config else 3
    if retry_backoff is None:
        retry_backoff = backend_config.retry_backoff if backend_config else 1.0
    if limiter is None:
        limiter = getattr(backend, "limiter", None)
    attempts = 0
    while True:
        if limiter is not None:
            limiter.acquire()
        try:
            result = backend.complete(req)
            break
        except TransportError:
            attempts += 1
            if attempts > max_retries:
                raise
            clock.sleep(retry_backoff * (2 ** (attempts - 1)))
    ledger.record(stage)
    if log_sink is not None:
        entry = {
            "stage": stage,
            "request": {
                "system": req.system,
                "user": req.user,
                "max_tokens": req.max_tokens,
                "temperature": req.temperature,
                "n": req.n_candidates,
                "stop": list(req.stop_sequences),
            },
            "response": {
                "candidates": list(result.candidates),
                "prompt_tokens": result.prompt_tokens,
                "completion_tokens": result.completion_tokens,
            },
        }
        log_sink.write(json.dumps(entry, ensure_ascii=False) + "\n")
    return result


def complete_with_suffix(
    backend: Backend,
    prefix: str,
    suffix: str,
    *,
    stage: str,
    ledger: CallLedger,
    max_tokens: int = 512,
    temperature: float = 0.9,
    limiter: Optional[RateLimiter] = None,
    max_retries: Optional[int] = None,
    retry_backoff: Optional[float] = None,
    clock: Clock = SystemClock(),
) -> str:
    """Run a suffix-aware completion through the chat wrapper (suffix block
    first, then the prefix block) and return the raw continuation."""
    if not prefix.strip():
        raise ValueError("prefix must be non-empty")
    if not suffix.strip():
        raise ValueError("suffix must be non-empty")
    wrapper = prompts.completion_wrapper(prefix, suffix)
    result = chat_generate(
        backend,
        GenerationRequest(user=wrapper, max_tokens=max_tokens, temperature=temperature),
        stage,
        ledger,
        limiter=limiter,
        max_retries=max_retries,
        retry_backoff=retry_backoff,
        clock=clock,
    )
    return result.candidates[0].strip()
