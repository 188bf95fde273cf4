"""Adaptive short/long chain-of-thought routing for reasoning models."""

from .core import (
    Embedding,
    FinishReason,
    Query,
    ReasoningMode,
    RoutingDecision,
    SampledResponse,
    TrainingExample,
    validate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "Embedding",
    "FinishReason",
    "Query",
    "ReasoningMode",
    "RoutingDecision",
    "SampledResponse",
    "TrainingExample",
    "validate_dataset",
]
