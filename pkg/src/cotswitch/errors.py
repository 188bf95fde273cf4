"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CotSwitchError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CotSwitchError):
    """Bad configuration or a non-retryable (4xx-class) backend response."""


class TransportError(CotSwitchError):
    """Network failure or timeout that persisted after all retries."""


class UnsupportedCapabilityError(CotSwitchError):
    """The backend does not offer the requested endpoint (e.g. embeddings)."""


class ShapeError(CotSwitchError, ValueError):
    """Input dimensionality does not match the model."""


class BatchSizeError(CotSwitchError, ValueError):
    """Train-mode batch normalization needs at least two rows."""


class NumericError(CotSwitchError, ValueError):
    """NaN or infinite values where finite numbers are required."""


class DomainError(CotSwitchError, ValueError):
    """Metric called outside its mathematical domain."""


class CheckpointError(CotSwitchError):
    """Checkpoint file is corrupt, truncated or of an unknown version."""


class PipelineError(CotSwitchError):
    """Dataset construction aborted; carries the offending query id."""

    def __init__(self, message: str, query_id: str | None = None):
        super().__init__(message)
        self.query_id = query_id
