"""Data models for socialtrust.

This module defines the domain types shared across the engine: survey logs, ratings,
per-partner feature vectors and trust levels, plus the invariant checker for
participant logs. All models are frozen dataclasses with full type hints.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from enum import Enum

SECONDS_PER_DAY = 86400
LIKERT_LEVELS = (1, 2, 3, 4, 5)
MAX_SURVEY_POSITION = 20


class CallDirection(Enum):
    """Direction of a logged call, encoded as in the survey document."""

    INCOMING = "in"
    OUTGOING = "out"
    MISSED = "missed"


class MessageDirection(Enum):
    """Direction of a logged message."""

    INCOMING = "in"
    OUTGOING = "out"


class RatingKind(Enum):
    """The three survey statements a partner can be rated on."""

    CLOSENESS = "closeness"
    TRUST_INFO = "trust_info"
    TRUST_BEST = "trust_best"


class Variable(Enum):
    """Communication indicators used by the quantile-threshold metric."""

    NUM_CALLS = "num_calls"
    NUM_MSGS = "num_msgs"
    DUR_CALLS = "dur_calls"
    LEN_MSGS = "len_msgs"
    REL_CALLS = "rel_calls"
    REL_MSGS = "rel_msgs"

    @property
    def label(self) -> str:
        """Display name used in human-readable tables."""
        return _VARIABLE_LABELS[self]


_VARIABLE_LABELS = {
    Variable.NUM_CALLS: "Number of calls",
    Variable.NUM_MSGS: "Number of messages",
    Variable.DUR_CALLS: "Duration of calls",
    Variable.LEN_MSGS: "Message length",
    Variable.REL_CALLS: "Rel number of calls",
    Variable.REL_MSGS: "Rel number of msgs",
}


@dataclass(frozen=True, order=True)
class TrustLevel:
    """A Likert trust level between 1 (strongly disagree) and 5 (strongly agree).

    Attributes:
        level: Integer level 1-5
    """

    level: int

    def __post_init__(self) -> None:
        """Validate TrustLevel attributes."""
        if isinstance(self.level, bool) or self.level not in LIKERT_LEVELS:
            raise ValueError(f"Trust level must be an integer 1-5, got {self.level!r}")

    def __int__(self) -> int:
        return self.level


@dataclass(frozen=True)
class CallRecord:
    """One call to or from a communication partner.

    Attributes:
        relative_date: Seconds before the survey plus the participant's constant offset
        direction: Incoming, outgoing or missed
        duration: Call duration in seconds (0 for missed calls)
        tag: Optional label assigned to the number (e.g. "home", "work", "mobile")
    """

    relative_date: int
    direction: CallDirection
    duration: int
    tag: str | None = None


@dataclass(frozen=True)
class MessageRecord:
    """One message to or from a communication partner.

    Attributes:
        relative_date: Seconds before the survey plus the participant's constant offset
        direction: Incoming or outgoing
        length: Message length in characters
        tag: Optional label assigned to the number
    """

    relative_date: int
    direction: MessageDirection
    length: int
    tag: str | None = None


@dataclass(frozen=True)
class Rating:
    """Survey answers for one partner; absent answers are None.

    Attributes:
        closeness: "I feel close to this person."
        trust_info: "I would trust this person with sensitive information."
        trust_best: "I trust that this person wants the best for me."
    """

    closeness: int | None = None
    trust_info: int | None = None
    trust_best: int | None = None

    def get(self, kind: RatingKind) -> int | None:
        """Return the answer for one statement."""
        return getattr(self, kind.value)  # type: ignore[no-any-return]

    @property
    def is_empty(self) -> bool:
        """True when no statement was answered."""
        return self.closeness is None and self.trust_info is None and self.trust_best is None


@dataclass(frozen=True)
class PartnerRecord:
    """A communication partner and everything logged about it.

    Attributes:
        partner_id: Anonymized (salted hash) identifier
        rating: Survey answers, all absent when the partner was not rated
        is_human: False when the participant marked "This is not a person"
        is_favorite: Whether the contact is starred in the address book
        calls: Logged calls with this partner
        messages: Logged messages with this partner
        survey_position: Position 1-20 in the questionnaire, if prompted
    """

    partner_id: str
    rating: Rating = field(default_factory=Rating)
    is_human: bool = True
    is_favorite: bool = False
    calls: tuple[CallRecord, ...] = ()
    messages: tuple[MessageRecord, ...] = ()
    survey_position: int | None = None

    @property
    def interaction_count(self) -> int:
        """Combined number of calls and messages."""
        return len(self.calls) + len(self.messages)

    def event_dates(self) -> Iterator[int]:
        """Yield the relative date of every call and message."""
        for call in self.calls:
            yield call.relative_date
        for message in self.messages:
            yield message.relative_date


@dataclass(frozen=True)
class ParticipantLog:
    """One participant's complete survey result.

    Attributes:
        participant_id: Opaque participant identifier
        address_book_size: Number of address book entries
        total_calls: Calls in the log, including calls with non-contacts
        total_messages: Messages in the log, including messages with non-contacts
        partners: Communication partners with their events
        active_partners: Reported number of active partners, if provided
    """

    participant_id: str
    address_book_size: int
    total_calls: int
    total_messages: int
    partners: tuple[PartnerRecord, ...] = ()
    active_partners: int | None = None

    @property
    def event_count(self) -> int:
        """Number of calls and messages over all partners."""
        return sum(p.interaction_count for p in self.partners)

    @property
    def log_span_days(self) -> float | None:
        """Days between the oldest and newest event, None when the log is empty."""
        dates = [d for p in self.partners for d in p.event_dates()]
        if not dates:
            return None
        return (max(dates) - min(dates)) / SECONDS_PER_DAY

    @property
    def rated_partners(self) -> tuple[PartnerRecord, ...]:
        """Partners with at least one survey answer."""
        return tuple(p for p in self.partners if not p.rating.is_empty)

    def get_partner(self, partner_id: str) -> PartnerRecord | None:
        """Find partner by id.

        Args:
            partner_id: Partner identifier to search for

        Returns:
            PartnerRecord if found, None otherwise
        """
        return next((p for p in self.partners if p.partner_id == partner_id), None)


@dataclass(frozen=True)
class FeatureVector:
    """Absolute and relative communication indicators for one partner.

    Attributes:
        num_calls: Number of calls
        num_msgs: Number of messages
        dur_calls: Summed call duration in seconds
        len_msgs: Summed message length in characters
        rel_calls: Percent of the participant's partner calls
        rel_msgs: Percent of the participant's partner messages
        avg_call_dur: Mean call duration (0 without calls)
        avg_msg_len: Mean message length (0 without messages)
        interactions_per_day: Calls plus messages per day of log span
        is_favorite: Whether the partner is starred
    """

    num_calls: int = 0
    num_msgs: int = 0
    dur_calls: int = 0
    len_msgs: int = 0
    rel_calls: float = 0.0
    rel_msgs: float = 0.0
    avg_call_dur: float = 0.0
    avg_msg_len: float = 0.0
    interactions_per_day: float = 0.0
    is_favorite: bool = False

    def value(self, variable: Variable) -> float:
        """Return the indicator named by a metric variable."""
        return float(getattr(self, variable.value))


class ViolationCode(Enum):
    """Machine-readable codes for participant-log invariant breaches."""

    NEGATIVE_COUNT = "NegativeCount"
    NEGATIVE_RELATIVE_DATE = "NegativeRelativeDate"
    NEGATIVE_CALL_DURATION = "NegativeCallDuration"
    MISSED_CALL_WITH_DURATION = "MissedCallWithDuration"
    NON_POSITIVE_MESSAGE_LENGTH = "NonPositiveMessageLength"
    RATING_OUT_OF_RANGE = "RatingOutOfRange"
    RATED_NON_HUMAN = "RatedNonHuman"
    SURVEY_POSITION_OUT_OF_RANGE = "SurveyPositionOutOfRange"
    PARTNER_WITHOUT_EVENTS = "PartnerWithoutEvents"
    DUPLICATE_PARTNER_ID = "DuplicatePartnerId"
    GENERAL_SECTION_UNDERCOUNT = "GeneralSectionUndercount"


@dataclass(frozen=True)
class Violation:
    """One invariant breach found in a participant log.

    Attributes:
        code: Machine-readable violation code
        path: Location in the log, e.g. ``partners[2].messages[0].length``
        message: Human-readable description
    """

    code: ViolationCode
    path: str
    message: str


def validate_log(log: ParticipantLog) -> list[Violation]:
    """Check a participant log against every datamodel invariant.

    Violations are data, not failures: the function never raises and returns the
    breaches in document order.

    Args:
        log: Participant log to check

    Returns:
        List of violations (empty if the log is valid)
    """
    violations: list[Violation] = []

    def report(code: ViolationCode, path: str, message: str) -> None:
        violations.append(Violation(code=code, path=path, message=message))

    for name in ("address_book_size", "total_calls", "total_messages"):
        if getattr(log, name) < 0:
            report(ViolationCode.NEGATIVE_COUNT, f"general.{name}", f"{name} must be >= 0")
    if log.active_partners is not None and log.active_partners < 0:
        report(ViolationCode.NEGATIVE_COUNT, "general.active_partners", "must be >= 0")

    seen: set[str] = set()
    for i, partner in enumerate(log.partners):
        base = f"partners[{i}]"
        if partner.partner_id in seen:
            report(
                ViolationCode.DUPLICATE_PARTNER_ID,
                f"{base}.id",
                f"Duplicate partner id '{partner.partner_id}'",
            )
        seen.add(partner.partner_id)

        if partner.interaction_count == 0:
            report(ViolationCode.PARTNER_WITHOUT_EVENTS, base, "Partner has no calls or messages")

        if partner.survey_position is not None and not (
            1 <= partner.survey_position <= MAX_SURVEY_POSITION
        ):
            report(
                ViolationCode.SURVEY_POSITION_OUT_OF_RANGE,
                f"{base}.survey_position",
                f"Survey position {partner.survey_position} outside 1-{MAX_SURVEY_POSITION}",
            )

        for kind in RatingKind:
            value = partner.rating.get(kind)
            if value is not None and value not in LIKERT_LEVELS:
                report(
                    ViolationCode.RATING_OUT_OF_RANGE,
                    f"{base}.rating.{kind.value}",
                    f"Rating {value} outside 1-5",
                )
        if not partner.is_human and not partner.rating.is_empty:
            report(ViolationCode.RATED_NON_HUMAN, f"{base}.rating", "Non-person carries a rating")

        for j, call in enumerate(partner.calls):
            path = f"{base}.calls[{j}]"
            if call.relative_date < 0:
                report(ViolationCode.NEGATIVE_RELATIVE_DATE, f"{path}.date", "Date must be >= 0")
            if call.duration < 0:
                report(
                    ViolationCode.NEGATIVE_CALL_DURATION,
                    f"{path}.duration",
                    "Duration must be >= 0",
                )
            elif call.direction is CallDirection.MISSED and call.duration != 0:
                report(
                    ViolationCode.MISSED_CALL_WITH_DURATION,
                    f"{path}.duration",
                    "Missed call must have duration 0",
                )

        for j, message in enumerate(partner.messages):
            path = f"{base}.messages[{j}]"
            if message.relative_date < 0:
                report(ViolationCode.NEGATIVE_RELATIVE_DATE, f"{path}.date", "Date must be >= 0")
            if message.length < 1:
                report(
                    ViolationCode.NON_POSITIVE_MESSAGE_LENGTH,
                    f"{path}.length",
                    "Message length must be >= 1",
                )

    partner_calls = sum(len(p.calls) for p in log.partners)
    if partner_calls > log.total_calls:
        report(
            ViolationCode.GENERAL_SECTION_UNDERCOUNT,
            "general.total_calls",
            f"total_calls={log.total_calls} but partners hold {partner_calls} calls",
        )
    partner_messages = sum(len(p.messages) for p in log.partners)
    if partner_messages > log.total_messages:
        report(
            ViolationCode.GENERAL_SECTION_UNDERCOUNT,
            "general.total_messages",
            f"total_messages={log.total_messages} but partners hold {partner_messages} messages",
        )

    return violations
