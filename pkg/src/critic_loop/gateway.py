"""Chat-completion providers: a live OpenAI-compatible client and a scripted
replay provider for deterministic tests.

Every provider exposes ``complete(request)``, which retries transient
failures with exponential backoff and returns exactly one result or raises
exactly one error per logical call. Rate-limit responses (429) retry;
other 4xx responses do not.
"""

from __future__ import annotations

import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import httpx

from .exceptions import PermanentProviderError, TransientProviderError, ValidationError
from .prompts import PromptText

API_KEY_ENV = "CRITIC_LOOP_API_KEY"


@dataclass(frozen=True)
class DecodingConfig:
    model_id: str
    temperature: float = 0.0
    top_p: float = 1.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValidationError("top_p must be in (0, 1]")
        if self.max_output_tokens <= 0:
            raise ValidationError("max_output_tokens must be positive")


@dataclass(frozen=True)
class CompletionRequest:
    prompt: PromptText
    config: DecodingConfig


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    provider_id: str
    latency: float
    attempt_count: int


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 1.0
    jitter: float = 0.2

    def delay(self, attempt: int, rng: random.Random) -> float:
        """Backoff before retry ``attempt`` (1-based): base*2^(n-1) +/- jitter."""
        base = self.base_delay * (2 ** (attempt - 1))
        return base * (1.0 + rng.uniform(-self.jitter, self.jitter))


class Provider:
    """Base provider: subclasses implement a single raw call."""

    provider_id = "provider"

    def __init__(
        self,
        retry: RetryPolicy | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ) -> None:
        self.retry = retry or RetryPolicy()
        self._sleep = sleep
        self._rng = rng or random.Random()

    def _call(self, request: CompletionRequest) -> tuple[str, float]:
        """One raw attempt; returns (text, latency seconds)."""
        raise NotImplementedError

    def complete(self, request: CompletionRequest) -> CompletionResult:
        last_error: Exception | None = None
        for attempt in range(1, self.retry.attempts + 1):
            try:
                text, latency = self._call(request)
            except TransientProviderError as exc:
                last_error = exc
                if attempt < self.retry.attempts:
                    self._sleep(self.retry.delay(attempt, self._rng))
                continue
            return CompletionResult(
                raw_text=text,
                provider_id=self.provider_id,
                latency=latency,
                attempt_count=attempt,
            )
        raise TransientProviderError(
            f"provider {self.provider_id} failed after {self.retry.attempts} attempts: {last_error}"
        )


class OpenAIChatProvider(Provider):
    """OpenAI-compatible chat-completions client over HTTPS.

    The credential comes from the environment only; it is never written
    into run artifacts.
    """

    provider_id = "openai-compat"

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        self.endpoint = endpoint.rstrip("/")
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key:
            raise ValidationError(f"missing credential: set {API_KEY_ENV}")
        self._client = httpx.Client(
            timeout=timeout,
            headers={"Authorization": f"Bearer {key}"},
            transport=transport,
        )

    def build_payload(self, request: CompletionRequest) -> dict:
        cfg = request.config
        return {
            "model": cfg.model_id,
            "messages": [{"role": "user", "content": request.prompt.text}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_output_tokens,
        }

    def _call(self, request: CompletionRequest) -> tuple[str, float]:
        started = time.monotonic()
        try:
            response = self._client.post(
                f"{self.endpoint}/chat/completions", json=self.build_payload(request)
            )
        except httpx.HTTPError as exc:
            raise TransientProviderError(f"transport failure: {exc}") from exc
        latency = time.monotonic() - started
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"HTTP {response.status_code}: {response.text[:200]}")
        if response.status_code >= 400:
            raise PermanentProviderError(f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise PermanentProviderError(f"malformed provider response: {exc}") from exc
        if text is None or text == "":
            raise TransientProviderError("provider returned an empty completion")
        return text, latency


ScriptKey = tuple[str, str, str]  # (passage_id, code_id, stage value)


@dataclass(frozen=True)
class FailureInjection:
    """A scripted fault at a 1-based raw-call index."""

    call_index: int
    kind: str  # "transient" | "permanent" | "malformed"
    text: str = "Sorry, I cannot produce structured output for this one."

    def __post_init__(self) -> None:
        if self.kind not in ("transient", "permanent", "malformed"):
            raise ValidationError(f"unknown failure kind {self.kind!r}")


@dataclass
class CallLogEntry:
    index: int
    key: ScriptKey
    outcome: str  # "ok" | "transient" | "permanent" | "malformed"


class ScriptedProvider(Provider):
    """Replays a response table keyed by (passage_id, code_id, stage).

    A failure plan injects faults at stated raw-call indices, counted over
    the provider's lifetime including retries. The call log records every
    raw call, so identical runs produce identical logs.
    """

    provider_id = "scripted"

    def __init__(
        self,
        script: dict[ScriptKey, str],
        failure_plan: list[FailureInjection] | None = None,
        **kwargs,
    ) -> None:
        kwargs.setdefault("sleep", lambda _: None)
        super().__init__(**kwargs)
        self.script = dict(script)
        self._plan = {f.call_index: f for f in (failure_plan or [])}
        self._lock = threading.Lock()
        self._calls = 0
        self.call_log: list[CallLogEntry] = []

    def _call(self, request: CompletionRequest) -> tuple[str, float]:
        key = (request.prompt.passage_id, request.prompt.code_id, request.prompt.stage.value)
        with self._lock:
            self._calls += 1
            index = self._calls
            injection = self._plan.get(index)
            if injection is not None:
                self.call_log.append(CallLogEntry(index=index, key=key, outcome=injection.kind))
            else:
                self.call_log.append(CallLogEntry(index=index, key=key, outcome="ok"))
        if injection is not None:
            if injection.kind == "transient":
                raise TransientProviderError(f"scripted transient failure at call {index}")
            if injection.kind == "permanent":
                raise PermanentProviderError(f"scripted permanent failure at call {index}")
            return injection.text, 0.0
        if key not in self.script:
            raise PermanentProviderError(f"no scripted response for key {key}")
        return self.script[key], 0.0


def make_scripted_provider(
    script: dict[ScriptKey, str],
    failure_plan: list[FailureInjection] | None = None,
    retry: RetryPolicy | None = None,
) -> ScriptedProvider:
    """Deterministic provider for tests; never sleeps between retries."""
    return ScriptedProvider(
        script,
        failure_plan=failure_plan,
        retry=retry or RetryPolicy(base_delay=0.0, jitter=0.0),
        rng=random.Random(0),
    )
