"""Shared domain types, JSONL serialization and dataset validation."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

import numpy as np


class ReasoningMode(str, enum.Enum):
    SC = "SC"
    LC = "LC"

    def __str__(self) -> str:
        return self.value


class FinishReason(str, enum.Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    gold_answer: str
    difficulty_hint: Optional[float] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("query id must be nonempty")
        if not self.text:
            raise ValueError(f"query {self.id!r} has empty text")
        if self.difficulty_hint is not None and not 0.0 <= self.difficulty_hint <= 1.0:
            raise ValueError(f"difficulty_hint must lie in [0, 1], got {self.difficulty_hint}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "gold_answer": self.gold_answer,
            "difficulty_hint": self.difficulty_hint,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Query":
        hint = d.get("difficulty_hint")
        return cls(
            id=str(d["id"]),
            text=d["text"],
            gold_answer=str(d["gold_answer"]),
            difficulty_hint=None if hint is None else float(hint),
        )


@dataclass(frozen=True)
class SampledResponse:
    mode: ReasoningMode
    text: str
    token_count: int
    finish_reason: FinishReason = FinishReason.STOP
    correct: Optional[bool] = None

    def __post_init__(self):
        if self.token_count < 0:
            raise ValueError("token_count must be nonnegative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "text": self.text,
            "token_count": self.token_count,
            "finish_reason": self.finish_reason.value,
            "correct": self.correct,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SampledResponse":
        return cls(
            mode=ReasoningMode(d["mode"]),
            text=d["text"],
            token_count=int(d["token_count"]),
            finish_reason=FinishReason(d["finish_reason"]),
            correct=d.get("correct"),
        )


class Embedding:
    """Immutable finite float64 vector."""

    __slots__ = ("_values",)

    def __init__(self, values: Iterable[float] | np.ndarray):
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise ValueError("embedding must have positive dimension")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding entries must be finite")
        arr.flags.writeable = False
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def dim(self) -> int:
        return int(self._values.size)

    def tolist(self) -> list[float]:
        return self._values.tolist()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self) -> int:
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        return f"Embedding(dim={self.dim})"


@dataclass(frozen=True, eq=True)
class TrainingExample:
    query_id: str
    embedding: Embedding
    y_sc: float
    y_lc: float
    k: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "embedding": self.embedding.tolist(),
            "y_sc": float(self.y_sc),
            "y_lc": float(self.y_lc),
            "k": int(self.k),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainingExample":
        return cls(
            query_id=str(d["query_id"]),
            embedding=Embedding(d["embedding"]),
            y_sc=float(d["y_sc"]),
            y_lc=float(d["y_lc"]),
            k=int(d["k"]),
        )


@dataclass(frozen=True)
class RoutingDecision:
    """Chosen mode plus the switcher diagnostics that produced it.

    ``margin`` is ``None`` when the mode was forced rather than computed.
    """

    mode: ReasoningMode
    y_hat_sc: Optional[float] = None
    y_hat_lc: Optional[float] = None
    margin: Optional[float] = None
    tau: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "y_hat_sc": self.y_hat_sc,
            "y_hat_lc": self.y_hat_lc,
            "margin": self.margin,
            "tau": self.tau,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RoutingDecision":
        return cls(
            mode=ReasoningMode(d["mode"]),
            y_hat_sc=d.get("y_hat_sc"),
            y_hat_lc=d.get("y_hat_lc"),
            margin=d.get("margin"),
            tau=d.get("tau"),
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # duplicate_id | range | not_multiple_of_k | dimension | bad_k
    query_id: str
    detail: str


def _is_multiple_of_k(y: float, k: int) -> bool:
    return math.isclose(y * k, round(y * k), abs_tol=1e-9)


def validate_dataset(examples: Sequence[TrainingExample]) -> list[Violation]:
    """Return every well-formedness violation; empty list means the dataset is clean.

    Dimensions are checked against the first example's embedding.
    """
    report: list[Violation] = []
    seen: set[str] = set()
    ref_dim: Optional[int] = None
    for ex in examples:
        if ex.query_id in seen:
            report.append(Violation("duplicate_id", ex.query_id, "query_id appears more than once"))
        seen.add(ex.query_id)

        if ex.k < 1:
            report.append(Violation("bad_k", ex.query_id, f"k={ex.k} must be positive"))
        for name, y in (("y_sc", ex.y_sc), ("y_lc", ex.y_lc)):
            if not (math.isfinite(y) and 0.0 <= y <= 1.0):
                report.append(Violation("range", ex.query_id, f"{name}={y} outside [0, 1]"))
            elif ex.k >= 1 and not _is_multiple_of_k(y, ex.k):
                report.append(
                    Violation("not_multiple_of_k", ex.query_id, f"{name}={y} is not a multiple of 1/{ex.k}")
                )

        if ref_dim is None:
            ref_dim = ex.embedding.dim
        elif ex.embedding.dim != ref_dim:
            report.append(
                Violation("dimension", ex.query_id, f"embedding dim {ex.embedding.dim} != {ref_dim}")
            )
    return report


# ---------------------------------------------------------------------------
# JSON Lines I/O
# ---------------------------------------------------------------------------


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False))
            fh.write("\n")


def load_corpus(path: str | Path) -> list[Query]:
    return [Query.from_dict(d) for d in iter_jsonl(path)]


def save_corpus(path: str | Path, corpus: Iterable[Query]) -> None:
    write_jsonl(path, (q.to_dict() for q in corpus))


def load_dataset(path: str | Path) -> list[TrainingExample]:
    return [TrainingExample.from_dict(d) for d in iter_jsonl(path)]


def save_dataset(path: str | Path, examples: Iterable[TrainingExample]) -> None:
    write_jsonl(path, (ex.to_dict() for ex in examples))


def stack_embeddings(examples: Sequence[TrainingExample]) -> np.ndarray:
    return np.stack([ex.embedding.values for ex in examples]).astype(np.float64)


def stack_targets(examples: Sequence[TrainingExample]) -> np.ndarray:
    return np.array([[ex.y_sc, ex.y_lc] for ex in examples], dtype=np.float64)

