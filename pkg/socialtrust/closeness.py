"""Three-group social closeness comparison.

An activity-based classifier places each partner in a closeness group; survey ratings
are binned into the same groups, and the mean error counts partners the classifier puts
in a lower group than the survey supports.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Any, Protocol

from .exceptions import NoRatedPartners
from .models import LIKERT_LEVELS, FeatureVector, Rating, RatingKind, TrustLevel

logger = logging.getLogger(__name__)


class ClosenessGroup(IntEnum):
    """Closeness groups, ordered Distant < Near < Closest."""

    DISTANT = 1
    NEAR = 2
    CLOSEST = 3


@dataclass(frozen=True)
class Cutoffs:
    """Activity-score boundaries: s <= low is Distant, low < s <= high is Near."""

    low: float
    high: float

    def __post_init__(self) -> None:
        """Validate Cutoffs attributes."""
        if self.low > self.high:
            raise ValueError(f"Cutoffs need low <= high, got ({self.low}, {self.high})")

    @classmethod
    def parse(cls, text: str) -> "Cutoffs":
        """Parse ``low,high``."""
        parts = [part.strip() for part in text.split(",")]
        if len(parts) != 2:
            raise ValueError(f"Cutoffs must be 'low,high', got {text!r}")
        return cls(low=float(parts[0]), high=float(parts[1]))


@dataclass(frozen=True)
class BinningScheme:
    """Mapping of rating levels onto closeness groups.

    Attributes:
        name: Scheme label used on the command line
        mapping: Rating level 1-5 -> group, monotone in the level
    """

    name: str
    mapping: Mapping[int, ClosenessGroup]

    def __post_init__(self) -> None:
        """Validate BinningScheme attributes."""
        if set(self.mapping) != set(LIKERT_LEVELS):
            raise ValueError(f"Scheme {self.name} must map every level 1-5")
        groups = [self.mapping[level] for level in LIKERT_LEVELS]
        if groups != sorted(groups):
            raise ValueError(f"Scheme {self.name} is not monotone in the rating level")


SCHEME_A = BinningScheme(
    name="A",
    mapping={
        1: ClosenessGroup.DISTANT,
        2: ClosenessGroup.DISTANT,
        3: ClosenessGroup.NEAR,
        4: ClosenessGroup.CLOSEST,
        5: ClosenessGroup.CLOSEST,
    },
)
SCHEME_B = BinningScheme(
    name="B",
    mapping={
        1: ClosenessGroup.DISTANT,
        2: ClosenessGroup.DISTANT,
        3: ClosenessGroup.DISTANT,
        4: ClosenessGroup.NEAR,
        5: ClosenessGroup.CLOSEST,
    },
)
SCHEMES = {scheme.name: scheme for scheme in (SCHEME_A, SCHEME_B)}


def activity_score(fv: FeatureVector, include_messages: bool) -> int:
    """Calls, plus messages when requested."""
    return fv.num_calls + (fv.num_msgs if include_messages else 0)


def classify(fv: FeatureVector, include_messages: bool, cutoffs: Cutoffs) -> ClosenessGroup:
    """Place a partner in a closeness group by its activity score."""
    score = activity_score(fv, include_messages)
    if score <= cutoffs.low:
        return ClosenessGroup.DISTANT
    if score <= cutoffs.high:
        return ClosenessGroup.NEAR
    return ClosenessGroup.CLOSEST


def bin_rating(rating: TrustLevel | int, scheme: BinningScheme) -> ClosenessGroup:
    """Map a survey rating onto a closeness group."""
    return scheme.mapping[TrustLevel(int(rating)).level]


class ClosenessClassifier(Protocol):
    """Anything that assigns a closeness group to a partner's features."""

    def classify(self, fv: FeatureVector) -> ClosenessGroup: ...


@dataclass(frozen=True)
class ActivityClassifier:
    """Cutoff-based classifier over call (and optionally message) activity."""

    cutoffs: Cutoffs
    include_messages: bool = False

    def classify(self, fv: FeatureVector) -> ClosenessGroup:
        """Place a partner in a closeness group."""
        return classify(fv, self.include_messages, self.cutoffs)


class ErrorMode(Enum):
    """What counts as an error."""

    UNDERESTIMATION = "underestimation"
    DISAGREEMENT = "disagreement"


class Aggregation(Enum):
    """How partner errors are combined into one figure."""

    PER_PARTICIPANT = "per-participant"
    POOLED = "pooled"


@dataclass(frozen=True)
class ParticipantError:
    """Error counts of one participant."""

    participant_id: str
    rated: int
    errors: int

    @property
    def fraction(self) -> float:
        """Share of rated partners counted as errors."""
        return self.errors / self.rated


@dataclass(frozen=True)
class ErrorReport:
    """Per-participant errors and their aggregate.

    Attributes:
        participants: One entry per participant with at least one rated partner
        aggregate: Mean error in [0, 1]
        mode: Error definition used
        aggregation: Aggregation used
    """

    participants: tuple[ParticipantError, ...]
    aggregate: float
    mode: ErrorMode
    aggregation: Aggregation

    def rows(self) -> list[dict[str, Any]]:
        """CSV rows: one per participant plus an ``ALL`` aggregate row."""
        rows: list[dict[str, Any]] = [
            {
                "participant_id": p.participant_id,
                "rated_partners": p.rated,
                "errors": p.errors,
                "mean_error": f"{p.fraction:.6f}",
            }
            for p in self.participants
        ]
        rows.append(
            {
                "participant_id": "ALL",
                "rated_partners": sum(p.rated for p in self.participants),
                "errors": sum(p.errors for p in self.participants),
                "mean_error": f"{self.aggregate:.6f}",
            }
        )
        return rows


def _is_error(predicted: ClosenessGroup, actual: ClosenessGroup, mode: ErrorMode) -> bool:
    if mode is ErrorMode.DISAGREEMENT:
        return predicted != actual
    return predicted < actual


def error_report(
    dataset: Mapping[str, Sequence[tuple[FeatureVector, Rating]]],
    classifier: ClosenessClassifier,
    scheme: BinningScheme,
    rating_kind: RatingKind = RatingKind.CLOSENESS,
    mode: ErrorMode = ErrorMode.UNDERESTIMATION,
    aggregation: Aggregation = Aggregation.PER_PARTICIPANT,
) -> ErrorReport:
    """Compare classifier groups with binned survey ratings.

    Args:
        dataset: participant_id -> (FeatureVector, Rating) pairs of its partners
        classifier: Closeness classifier under test
        scheme: Rating binning
        rating_kind: Survey statement binned as ground truth
        mode: Underestimation (default) or any disagreement
        aggregation: Mean of per-participant fractions (default) or pooled fraction

    Raises:
        NoRatedPartners: If no partner carries an answer for ``rating_kind``
    """
    entries: list[ParticipantError] = []
    for participant_id, rows in dataset.items():
        rated = errors = 0
        for fv, rating in rows:
            level = rating.get(rating_kind)
            if level is None:
                continue
            rated += 1
            errors += _is_error(classifier.classify(fv), bin_rating(level, scheme), mode)
        if rated:
            entries.append(ParticipantError(participant_id, rated, errors))
        else:
            logger.debug(f"Participant {participant_id} has no {rating_kind.value} ratings")
    if not entries:
        raise NoRatedPartners(f"No partner carries a {rating_kind.value} rating")

    if aggregation is Aggregation.POOLED:
        aggregate = sum(e.errors for e in entries) / sum(e.rated for e in entries)
    else:
        aggregate = sum(e.fraction for e in entries) / len(entries)
    return ErrorReport(
        participants=tuple(entries), aggregate=aggregate, mode=mode, aggregation=aggregation
    )


def mean_error(
    dataset: Mapping[str, Sequence[tuple[FeatureVector, Rating]]],
    classifier: ClosenessClassifier,
    scheme: BinningScheme,
    rating_kind: RatingKind = RatingKind.CLOSENESS,
    mode: ErrorMode = ErrorMode.UNDERESTIMATION,
    aggregation: Aggregation = Aggregation.PER_PARTICIPANT,
) -> float:
    """Aggregate error fraction in [0, 1]; see ``error_report``."""
    return error_report(dataset, classifier, scheme, rating_kind, mode, aggregation).aggregate
