"""Deterministic planted-difficulty backend for offline tests.

Every query carries a difficulty ``d`` in [0, 1]. A completion is correct
with probability

    p_SC(d) = clamp(1 - d, 0, 1)
    p_LC(d) = clamp(1 - d + 0.4, 0, 1)

Short-CoT completions cost about ``sc_tokens`` (default 300) and long-CoT
completions about ``lc_tokens`` (default 1800), each with a deterministic
jitter of up to ``jitter`` relative. All randomness is a pure function of
``(noise_seed, query id, mode, sample seed)``.

Embedding layout (dimension ``embed_dim``)::

    values[j]   = cos(pi * (j + 1) * d)        for j < n_freq
    values[j]   = text_noise * z_j(text)       for j >= n_freq

where ``z_j`` are standard normal draws seeded by a hash of the text, so
``d = arccos(values[0]) / pi`` is recoverable exactly.
"""

from __future__ import annotations

import hashlib
import itertools
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np

from ..core import Embedding, FinishReason, Query, ReasoningMode
from ..data.prompts import detect_mode
from ..errors import ConfigurationError, TransportError
from .client import CompletionResult, SamplingParams, prompt_text

LC_BONUS = 0.4


def stable_hash(*parts: Any) -> int:
    """64-bit hash that is stable across processes (unlike ``hash``)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def planted_rates(d: float) -> tuple[float, float]:
    return min(max(1.0 - d, 0.0), 1.0), min(max(1.0 - d + LC_BONUS, 0.0), 1.0)


def _wrong_answer(gold: str) -> str:
    try:
        return str(Fraction(gold.strip()) + 1)
    except (ValueError, ZeroDivisionError):
        return "none of these"


@dataclass(frozen=True)
class MockCall:
    query_id: str
    mode: ReasoningMode
    seed: Optional[int]
    prompt: str


class MockBackend:
    def __init__(
        self,
        corpus: Sequence[Query],
        noise_seed: int = 0,
        sc_tokens: int = 300,
        lc_tokens: int = 1800,
        jitter: float = 0.05,
        embed_dim: int = 32,
        n_freq: int = 16,
        text_noise: float = 0.05,
        reachable: bool = True,
    ):
        if n_freq < 1 or embed_dim < n_freq:
            raise ConfigurationError("need 1 <= n_freq <= embed_dim")
        self._by_text: dict[str, Query] = {}
        self._by_id: dict[str, Query] = {}
        for q in corpus:
            if q.difficulty_hint is None:
                raise ConfigurationError(f"mock backend needs difficulty_hint for query {q.id!r}")
            self._by_text[q.text] = q
            self._by_id[q.id] = q
        self.noise_seed = int(noise_seed)
        self.sc_tokens = sc_tokens
        self.lc_tokens = lc_tokens
        self.jitter = jitter
        self.embed_dim = embed_dim
        self.n_freq = n_freq
        self.text_noise = text_noise
        self.reachable = reachable
        self.calls: list[MockCall] = []
        self._lock = threading.Lock()
        self._unseeded = itertools.count()

    @property
    def fingerprint(self) -> str:
        return (
            f"mock:noise_seed={self.noise_seed},sc={self.sc_tokens},lc={self.lc_tokens},"
            f"jitter={self.jitter},dim={self.embed_dim}"
        )

    def ping(self) -> bool:
        return self.reachable

    # -- lookup -------------------------------------------------------------

    def query_for_text(self, text: str) -> Query:
        try:
            return self._by_text[text]
        except KeyError:
            raise ConfigurationError("mock backend received a query outside its corpus") from None

    def _query_for_prompt(self, prompt: Any) -> Query:
        question = getattr(prompt, "question", None)
        if question is not None:
            return self.query_for_text(question)
        text = prompt_text(prompt)
        for q_text, q in self._by_text.items():
            if q_text in text:
                return q
        raise ConfigurationError("mock backend received a query outside its corpus")

    def planted_rate(self, query: Query, mode: ReasoningMode) -> float:
        p_sc, p_lc = planted_rates(query.difficulty_hint)
        return p_sc if mode is ReasoningMode.SC else p_lc

    # -- backend surface ---------------------------------------------------

    def complete(self, prompt: Any, params: SamplingParams, seed: Optional[int] = None) -> CompletionResult:
        if not self.reachable:
            raise TransportError("mock backend configured as unreachable")
        text = prompt_text(prompt)
        if not text:
            raise ValueError("prompt must be nonempty")
        query = self._query_for_prompt(prompt)
        mode = detect_mode(text)
        if seed is None:
            seed_key: Any = ("unseeded", next(self._unseeded))
        else:
            seed_key = int(seed)
        with self._lock:
            self.calls.append(MockCall(query.id, mode, seed, text))

        rng = np.random.default_rng(
            [self.noise_seed, stable_hash(query.id), 0 if mode is ReasoningMode.SC else 1, stable_hash(seed_key)]
        )
        correct = bool(rng.random() < self.planted_rate(query, mode))
        base = self.sc_tokens if mode is ReasoningMode.SC else self.lc_tokens
        tokens = max(1, int(round(base * (1.0 + self.jitter * (2.0 * rng.random() - 1.0)))))

        answer = query.gold_answer if correct else _wrong_answer(query.gold_answer)
        if mode is ReasoningMode.SC:
            body = f"Working it out directly.\n\nThe final answer is $\\boxed{{{answer}}}$."
        else:
            body = (
                "<think>\nLet me consider the problem carefully, checking each step.\n</think>\n\n"
                f"After verifying, the final answer is $\\boxed{{{answer}}}$."
            )
        if tokens > params.max_tokens:
            # truncated before the final answer
            return CompletionResult(body[: max(1, len(body) // 3)].split("\\boxed")[0], params.max_tokens, FinishReason.LENGTH)
        return CompletionResult(body, tokens, FinishReason.STOP)

    def embed(self, query_text: str) -> Embedding:
        if not query_text:
            raise ValueError("query text must be nonempty")
        d = self.query_for_text(query_text).difficulty_hint
        return Embedding(mock_embedding(d, query_text, self.embed_dim, self.n_freq, self.text_noise))


def mock_embedding(d: float, text: str, dim: int = 32, n_freq: int = 16, text_noise: float = 0.05) -> np.ndarray:
    freqs = np.arange(1, n_freq + 1, dtype=np.float64)
    signal = np.cos(np.pi * freqs * d)
    rng = np.random.default_rng(stable_hash("embed", text))
    noise = text_noise * rng.standard_normal(dim - n_freq)
    return np.concatenate([signal, noise])


def decode_difficulty(embedding: Embedding) -> float:
    return float(np.arccos(np.clip(embedding.values[0], -1.0, 1.0)) / np.pi)


def mock_backend(corpus: Sequence[Query], noise_seed: int = 0, **kwargs: Any) -> MockBackend:
    return MockBackend(corpus, noise_seed=noise_seed, **kwargs)


def planted_corpus(n: int, seed: int = 0, prefix: str = "q") -> list[Query]:
    """``n`` synthetic queries with difficulty drawn uniformly from [0, 1]."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        d = float(rng.random())
        a, b = int(rng.integers(2, 999)), int(rng.integers(2, 999))
        out.append(
            Query(
                id=f"{prefix}{i:05d}",
                text=f"[{prefix}{i:05d}] Compute {a} + {b}, then report the result.",
                gold_answer=str(a + b),
                difficulty_hint=d,
            )
        )
    return out
