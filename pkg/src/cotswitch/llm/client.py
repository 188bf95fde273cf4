"""OpenAI-compatible HTTP backend: prompt completions and embeddings."""

from __future__ import annotations

import hashlib
import logging
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, Protocol, runtime_checkable

import httpx

from ..core import Embedding, FinishReason, ReasoningMode
from ..errors import ConfigurationError, TransportError, UnsupportedCapabilityError

logger = logging.getLogger(__name__)

DEFAULT_CONCURRENCY = 8


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens: int = 4096

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens_sc: int = 4096
    max_tokens_lc: int = 16384

    def __post_init__(self):
        if self.max_tokens_sc < 1 or self.max_tokens_lc < 1:
            raise ValueError("max_tokens must be positive")
        if self.max_tokens_lc < self.max_tokens_sc:
            raise ValueError("max_tokens_lc must be >= max_tokens_sc")
        # reuse SamplingParams range checks
        SamplingParams(self.temperature, self.top_p, self.max_tokens_sc)

    def params_for(self, mode: ReasoningMode) -> SamplingParams:
        limit = self.max_tokens_sc if mode is ReasoningMode.SC else self.max_tokens_lc
        return SamplingParams(self.temperature, self.top_p, limit)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model_name: str
    api_key: Optional[str] = field(default=None, repr=False)
    timeout: float = 600.0
    max_retries: int = 3
    backoff_base: float = 0.5
    concurrency: int = DEFAULT_CONCURRENCY
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url is required")
        if not 0 <= self.max_retries <= 10:
            raise ValueError("max_retries must lie in [0, 10]")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.concurrency < 1:
            raise ValueError("concurrency must be positive")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    completion_tokens: int
    finish_reason: FinishReason


@runtime_checkable
class Backend(Protocol):
    def complete(self, prompt: Any, params: SamplingParams, seed: Optional[int] = None) -> CompletionResult: ...

    def embed(self, query_text: str) -> Embedding: ...


def prompt_text(prompt: Any) -> str:
    """Accept a rendered prompt object (``.text``) or a plain string."""
    return prompt if isinstance(prompt, str) else prompt.text


def _parse_finish_reason(raw: Optional[str]) -> FinishReason:
    if raw == "length":
        return FinishReason.LENGTH
    if raw in (None, "stop", "eos", "stop_sequence"):
        return FinishReason.STOP
    return FinishReason.ERROR


class HTTPBackend:
    """Client for ``POST /v1/completions`` and ``POST /v1/embeddings``.

    Transient failures (connection errors, timeouts, 5xx) are retried with
    exponential backoff, ``1 + max_retries`` attempts in total. Any 4xx
    response is raised immediately as ``ConfigurationError``.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(config.concurrency)
        self._embed_dim: Optional[int] = None
        self.attempts = 0  # total HTTP attempts, for diagnostics

    @property
    def fingerprint(self) -> str:
        raw = f"{self.config.base_url}|{self.config.model_name}"
        return "http:" + hashlib.sha256(raw.encode()).hexdigest()[:16]

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, body: dict[str, Any]) -> dict[str, Any]:
        last_exc: Optional[Exception] = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(min(self.config.backoff_base * 2 ** (attempt - 1), 30.0))
            self.attempts += 1
            try:
                with self._slots:
                    resp = self._client.post(path, json=body)
            except httpx.TransportError as exc:
                last_exc = exc
                logger.warning("POST %s attempt %d failed: %s", path, attempt + 1, exc)
                continue
            if path.endswith("/embeddings") and resp.status_code in (404, 405, 501):
                raise UnsupportedCapabilityError(f"backend has no embedding endpoint (HTTP {resp.status_code})")
            if resp.status_code >= 500:
                last_exc = RuntimeError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                logger.warning("POST %s attempt %d: HTTP %d", path, attempt + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise ConfigurationError(f"POST {path} rejected with HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ConfigurationError(f"POST {path} returned non-JSON body") from exc
        raise TransportError(
            f"POST {path} failed after {self.config.max_retries + 1} attempts: {last_exc}"
        ) from last_exc

    def complete(self, prompt: Any, params: SamplingParams, seed: Optional[int] = None) -> CompletionResult:
        text = prompt_text(prompt)
        if not text:
            raise ValueError("prompt must be nonempty")
        body: dict[str, Any] = {
            "model": self.config.model_name,
            "prompt": text,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "top_p": params.top_p,
        }
        if seed is not None:
            body["seed"] = int(seed)
        data = self._post("/v1/completions", body)
        try:
            choice = data["choices"][0]
            out = choice.get("text") or ""
            usage = data.get("usage") or {}
            tokens = int(usage.get("completion_tokens", 0))
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigurationError(f"malformed completion response: {exc}") from exc
        return CompletionResult(out, max(tokens, 0), _parse_finish_reason(choice.get("finish_reason")))

    def embed(self, query_text: str) -> Embedding:
        if not query_text:
            raise ValueError("query text must be nonempty")
        data = self._post("/v1/embeddings", {"model": self.config.model_name, "input": query_text})
        try:
            vec = Embedding(data["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigurationError(f"malformed embedding response: {exc}") from exc
        if self._embed_dim is None:
            self._embed_dim = vec.dim
        elif vec.dim != self._embed_dim:
            raise ConfigurationError(f"embedding dim changed from {self._embed_dim} to {vec.dim}")
        return vec

    def ping(self) -> bool:
        try:
            resp = self._client.get("/v1/models", timeout=min(self.config.timeout, 5.0))
        except httpx.HTTPError:
            return False
        return resp.status_code < 500
