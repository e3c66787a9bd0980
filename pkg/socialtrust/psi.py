"""Mutual-contact discovery and per-device trust estimation.

Contacts are turned into salted SHA-256 tokens and intersected as hashed sets. This is
not a cryptographic private set intersection: ``Intersector`` is the boundary a real
protocol would plug into. Each device then grades the mutual contacts from its own logs
and combines count and quality of the evidence into one trust estimate of the peer.
"""

import hashlib
import logging
import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from typing import Protocol

from .exceptions import EmptySalt
from .features import extract_all
from .models import FeatureVector, ParticipantLog, TrustLevel
from .trustmetric import Combinator, GradingBands, QuantileTable, TrustPrediction, TrustPredictor

logger = logging.getLogger(__name__)

MIN_SALT_BYTES = 16
CANONICAL_DIGITS = 9
TOKEN_BYTES = 32


@dataclass(frozen=True, order=True)
class ContactToken:
    """SHA-256 digest of (session salt || canonical contact identifier)."""

    digest: bytes

    def __post_init__(self) -> None:
        """Validate ContactToken attributes."""
        if len(self.digest) != TOKEN_BYTES:
            raise ValueError(f"Token must be {TOKEN_BYTES} bytes, got {len(self.digest)}")

    def hex(self) -> str:
        """Hex encoding used on the wire."""
        return self.digest.hex()

    @classmethod
    def from_hex(cls, text: str) -> "ContactToken":
        """Decode a hex-encoded token."""
        return cls(bytes.fromhex(text))


def canonicalize(identifier: str) -> str | None:
    """Normalize a phone number to its trailing nine digits.

    Returns:
        The canonical form, or None when the identifier holds no digit
    """
    digits = "".join(ch for ch in identifier if ch.isdigit())
    return digits[-CANONICAL_DIGITS:] if digits else None


def _check_salt(salt: bytes) -> None:
    if len(salt) < MIN_SALT_BYTES:
        raise EmptySalt(f"Session salt needs at least {MIN_SALT_BYTES} bytes, got {len(salt)}")


def _token(canonical: str, salt: bytes) -> ContactToken:
    return ContactToken(hashlib.sha256(salt + canonical.encode("ascii")).digest())


def token_directory(ids: Iterable[str], session_salt: bytes) -> dict[ContactToken, str]:
    """Map every token to the first own identifier that produced it.

    Raises:
        EmptySalt: If the salt is shorter than 16 bytes
    """
    _check_salt(session_salt)
    directory: dict[ContactToken, str] = {}
    for identifier in ids:
        canonical = canonicalize(identifier)
        if canonical is None:
            logger.debug(f"Skipping identifier without digits: {identifier!r}")
            continue
        directory.setdefault(_token(canonical, session_salt), identifier)
    return directory


def tokenize_contacts(ids: Iterable[str], session_salt: bytes) -> set[ContactToken]:
    """One token per distinct canonical identifier.

    Raises:
        EmptySalt: If the salt is shorter than 16 bytes
    """
    return set(token_directory(ids, session_salt))


def anonymize_identifier(identifier: str, salt: bytes) -> str:
    """Salted hash used as partner id in logs (16 hex characters)."""
    canonical = canonicalize(identifier) or identifier
    return hashlib.sha256(salt + canonical.encode("utf-8")).hexdigest()[:16]


def intersect(a: set[ContactToken], b: set[ContactToken]) -> set[ContactToken]:
    """Exact set intersection."""
    return a & b


class Intersector(Protocol):
    """Mutual-contact discovery between two parties."""

    def intersect(self, own: set[ContactToken], peer: set[ContactToken]) -> set[ContactToken]: ...


class HashedSetIntersector:
    """Plain intersection of salted-hash token sets."""

    def intersect(self, own: set[ContactToken], peer: set[ContactToken]) -> set[ContactToken]:
        """Return the tokens both parties hold."""
        return intersect(own, peer)


@dataclass(frozen=True)
class CombinationParams:
    """Weights for combining evidence count and quality.

    Attributes:
        weight: Share of the qualitative score in the combined score (0-1)
        saturation: Mutual-contact count constant k of 1 - exp(-count / k)
    """

    weight: float = 0.7
    saturation: float = 5.0

    def __post_init__(self) -> None:
        """Validate CombinationParams attributes."""
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"Combination weight must lie in [0, 1], got {self.weight}")
        if self.saturation <= 0:
            raise ValueError(f"Saturation constant must be > 0, got {self.saturation}")


@dataclass(frozen=True)
class TrustEstimate:
    """One device's verdict about a peer.

    Attributes:
        mutual_count: Number of mutual contacts
        quantitative_score: Saturating function of the mutual count
        qualitative_score: Mean normalized grade of the mutual contacts
        combined: Weighted combination of both scores
        level: 1 + floor(4 * combined), at most 5
        evidence: Per mutual contact, its token and the prediction from own logs
        insufficient_evidence: True when there is no mutual contact
    """

    mutual_count: int
    quantitative_score: float
    qualitative_score: float
    combined: float
    level: TrustLevel
    evidence: tuple[tuple[ContactToken, TrustPrediction], ...] = ()
    insufficient_evidence: bool = False

    def __post_init__(self) -> None:
        """Validate TrustEstimate attributes."""
        if self.mutual_count != len(self.evidence):
            raise ValueError("mutual_count must equal the number of evidence entries")
        if not 0.0 <= self.combined <= 1.0:
            raise ValueError(f"Combined score must lie in [0, 1], got {self.combined}")


def combine(
    grades: Iterable[int], mutual_count: int, params: CombinationParams
) -> tuple[float, float, float]:
    """Return (quantitative, qualitative, combined) scores."""
    values = list(grades)
    qualitative = sum((g - 1) / 4 for g in values) / len(values) if values else 0.0
    quantitative = 1.0 - math.exp(-mutual_count / params.saturation)
    combined = params.weight * qualitative + (1.0 - params.weight) * quantitative
    return quantitative, qualitative, min(1.0, max(0.0, combined))


def level_for(combined: float) -> TrustLevel:
    """Trust level 1 + floor(4 * combined), clamped to 5."""
    return TrustLevel(min(5, 1 + math.floor(4 * combined)))


TokenResolver = Callable[[ContactToken], str | None]


def establish_trust(
    own_log: ParticipantLog,
    mutual: set[ContactToken],
    table: QuantileTable,
    resolver: TokenResolver,
    combinator: Combinator | None = None,
    params: CombinationParams | None = None,
    bands: GradingBands | None = None,
    features: Mapping[str, FeatureVector] | None = None,
) -> TrustEstimate:
    """Estimate trust in a peer from the mutual contacts, using own logs only.

    Every mutual contact is graded with the trust metric. Contacts that resolve to no
    logged partner are graded from an all-zero feature vector.

    Args:
        own_log: This device's participant log
        mutual: Tokens of the mutual contacts
        table: Calibrated quantile table
        resolver: Maps a token to the own partner id (None if unknown)
        combinator: Rule combinator for grading
        params: Combination weights
        bands: Band -> grade mapping
        features: Precomputed ``extract_all(own_log)``

    Returns:
        TrustEstimate of the peer
    """
    params = params or CombinationParams()
    if not mutual:
        return TrustEstimate(
            mutual_count=0,
            quantitative_score=0.0,
            qualitative_score=0.0,
            combined=0.0,
            level=TrustLevel(1),
            insufficient_evidence=True,
        )

    predictor = TrustPredictor(table, combinator, bands=bands)
    vectors = features if features is not None else extract_all(own_log)
    evidence: list[tuple[ContactToken, TrustPrediction]] = []
    for token in sorted(mutual):
        partner_id = resolver(token)
        fv = vectors.get(partner_id) if partner_id is not None else None
        if fv is None:
            logger.debug(f"Mutual contact {token.hex()[:12]} has no logged interaction")
            fv = FeatureVector()
        evidence.append((token, predictor.predict(fv)))

    quantitative, qualitative, combined = combine(
        (prediction.grade.level for _, prediction in evidence), len(evidence), params
    )
    return TrustEstimate(
        mutual_count=len(evidence),
        quantitative_score=quantitative,
        qualitative_score=qualitative,
        combined=combined,
        level=level_for(combined),
        evidence=tuple(evidence),
    )
