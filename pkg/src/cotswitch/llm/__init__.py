from .client import (
    Backend,
    BackendConfig,
    CompletionResult,
    HTTPBackend,
    SamplingConfig,
    SamplingParams,
)
from .embedders import FallbackEmbedder, HashingEmbedder, resolve_embedder
from .mock import MockBackend, decode_difficulty, mock_backend, planted_corpus, planted_rates

__all__ = [
    "Backend",
    "BackendConfig",
    "CompletionResult",
    "FallbackEmbedder",
    "HTTPBackend",
    "HashingEmbedder",
    "MockBackend",
    "SamplingConfig",
    "SamplingParams",
    "decode_difficulty",
    "mock_backend",
    "planted_corpus",
    "planted_rates",
    "resolve_embedder",
]
