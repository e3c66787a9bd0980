"""Custom exceptions for socialtrust.

This module defines the exception hierarchy used throughout the engine.
All exceptions inherit from SocialTrustError base class for easy catching.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .simnet import ProtocolEvent


class SocialTrustError(Exception):
    """Base exception for all socialtrust errors."""


class IngestError(SocialTrustError):
    """Base exception for survey-result ingestion errors."""


class ParseError(IngestError):
    """Raised when a survey-result document is not well-formed YAML."""


class SchemaError(IngestError):
    """Raised when a survey-result document violates the canonical schema."""

    def __init__(self, message: str, path: str) -> None:
        """Initialize schema error.

        Args:
            message: Human-readable error message
            path: Location of the offending value, e.g. ``partners[0].calls[0].duration``
        """
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ConfigError(SocialTrustError):
    """Raised when an engine configuration file is invalid."""


class ArtifactError(SocialTrustError):
    """Raised when an intermediate artifact cannot be read or written."""


class MetricError(SocialTrustError):
    """Base exception for trust-metric calibration and evaluation errors."""


class EmptyReferencePopulation(MetricError):
    """Raised when no partner carries the reference rating level."""


class UnknownProbability(MetricError):
    """Raised when a quantile probability is not present in a table."""

    def __init__(self, probability: float, available: tuple[float, ...]) -> None:
        """Initialize unknown probability error.

        Args:
            probability: Requested quantile probability
            available: Probabilities the table provides
        """
        super().__init__(
            f"Probability {probability} not in quantile table "
            f"(available: {', '.join(str(p) for p in available)})"
        )
        self.probability = probability
        self.available = available


class NoPartnerSatisfiesRule(MetricError):
    """Raised when no rated partner satisfies an evaluated rule."""


class NoRatedFavorites(MetricError):
    """Raised when no favorite partner carries a rating."""


class NoRatedPartners(MetricError):
    """Raised when a comparison dataset has no rated partner."""


class StatisticsError(SocialTrustError):
    """Base exception for statistics errors."""


class DegenerateInput(StatisticsError):
    """Raised when input vectors are too short, mismatched or have zero variance."""


class PSIError(SocialTrustError):
    """Base exception for mutual-contact discovery errors."""


class EmptySalt(PSIError):
    """Raised when a session salt is missing or shorter than 16 bytes."""


class SaltMismatch(PSIError):
    """Raised when a peer's tokens were built under a different session salt."""


class SimulationError(SocialTrustError):
    """Base exception for simulated-network errors."""


class InvalidConfig(SimulationError):
    """Raised when a simulation configuration is out of range."""


class ProtocolError(SimulationError):
    """Raised when a protocol peer attempts an illegal state transition."""


class ProtocolTimeout(SimulationError):
    """Raised when a message is lost beyond the retry budget."""

    def __init__(self, message: str, trace: list[ProtocolEvent]) -> None:
        """Initialize protocol timeout.

        Args:
            message: Human-readable error message
            trace: Protocol events recorded up to the failure
        """
        super().__init__(message)
        self.trace = trace
