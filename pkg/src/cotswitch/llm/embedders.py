"""Query embedders.

The preferred source is the backend's own embedding endpoint. When the
backend has none, ``HashingEmbedder`` provides a deterministic, much
lower-fidelity bag-of-features vector so routing still works.
"""

from __future__ import annotations

import hashlib
import logging
import re
from typing import Any, Protocol

import numpy as np

from ..core import Embedding
from ..errors import UnsupportedCapabilityError

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class Embedder(Protocol):
    def embed(self, query_text: str) -> Embedding: ...


class HashingEmbedder:
    """Signed feature hashing over unigrams, bigrams and character trigrams.

    Lower fidelity than a model-derived embedding: it sees surface form only.
    """

    low_fidelity = True

    def __init__(self, dim: int = 1024):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    @property
    def fingerprint(self) -> str:
        return f"hashing:dim={self.dim}"

    def _features(self, text: str) -> list[str]:
        toks = _TOKEN.findall(text.lower())
        feats = [f"u:{t}" for t in toks]
        feats += [f"b:{a} {b}" for a, b in zip(toks, toks[1:])]
        squashed = " ".join(toks)
        feats += [f"c:{squashed[i:i + 3]}" for i in range(max(len(squashed) - 2, 0))]
        return feats

    def embed(self, query_text: str) -> Embedding:
        if not query_text:
            raise ValueError("query text must be nonempty")
        vec = np.zeros(self.dim, dtype=np.float64)
        for feat in self._features(query_text):
            h = int.from_bytes(hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest(), "little")
            vec[h % self.dim] += 1.0 if (h >> 63) & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return Embedding(vec)


class FallbackEmbedder:
    """Use ``primary.embed``; switch permanently to ``fallback`` if unsupported."""

    def __init__(self, primary: Any, fallback: Embedder):
        self.primary = primary
        self.fallback = fallback
        self.using_fallback = False

    def embed(self, query_text: str) -> Embedding:
        if not self.using_fallback:
            try:
                return self.primary.embed(query_text)
            except UnsupportedCapabilityError:
                logger.warning("backend has no embedding endpoint; falling back to hashing embedder")
                self.using_fallback = True
        return self.fallback.embed(query_text)


def resolve_embedder(backend: Any, kind: str = "auto", dim: int = 1024) -> Embedder:
    if kind == "backend":
        return backend
    if kind == "hashing":
        return HashingEmbedder(dim)
    if kind == "auto":
        return FallbackEmbedder(backend, HashingEmbedder(dim))
    raise ValueError(f"unknown embedder kind {kind!r}; expected backend, hashing or auto")
