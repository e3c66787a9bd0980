"""Survey-result parsing, deduplication and dataset filtering.

Provides functions to parse YAML survey-result documents into typed participant logs,
serialize them back, drop double submissions, apply the dataset filter policy and
reproduce the questionnaire's partner-selection strategy.
"""

import hashlib
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .exceptions import ParseError, SchemaError
from .file_operations import read_jsonl, read_text, write_jsonl
from .models import (
    MAX_SURVEY_POSITION,
    CallDirection,
    CallRecord,
    MessageDirection,
    MessageRecord,
    ParticipantLog,
    PartnerRecord,
    Rating,
    RatingKind,
    validate_log,
)

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = frozenset({"general", "partners", "participant", "worker", "submitted"})
GENERAL_KEYS = frozenset({"addressBookSize", "totalCalls", "totalMessages", "activePartners"})
PARTNER_KEYS = frozenset(
    {"id", "surveyPosition", "isHuman", "isFavorite", "rating", "calls", "messages"}
)
RATING_KEYS = {
    "closeness": RatingKind.CLOSENESS,
    "trustInfo": RatingKind.TRUST_INFO,
    "trustBest": RatingKind.TRUST_BEST,
}
CALL_KEYS = frozenset({"date", "type", "duration", "tag"})
MESSAGE_KEYS = frozenset({"date", "type", "length", "tag"})
DOCUMENT_SUFFIXES = (".yaml", ".yml")


class InteractionClass(Enum):
    """Selection bucket of a surveyed partner."""

    MOST_INTERACTIONS = "most"
    LEAST_INTERACTIONS = "least"
    RANDOM = "random"


# Questionnaire slots cycle through the classes in this order.
CLASS_CYCLE = (
    InteractionClass.MOST_INTERACTIONS,
    InteractionClass.LEAST_INTERACTIONS,
    InteractionClass.RANDOM,
)


class ExclusionReason(Enum):
    """Rule of the filter policy that excluded a log."""

    TOO_FEW_PARTNERS_ABSOLUTE = "TooFewPartnersAbsolute"
    SHORT_LOG_FEW_PARTNERS = "ShortLogFewPartners"
    NO_RATINGS = "NoRatings"


@dataclass(frozen=True)
class FilterPolicy:
    """Thresholds for excluding unreliable logs.

    Attributes:
        min_span_days: Logs spanning fewer days are "short"
        min_partners_for_short_logs: Short logs need at least this many partners
        min_partners_absolute: Every log needs at least this many partners
    """

    min_span_days: float = 7.0
    min_partners_for_short_logs: int = 10
    min_partners_absolute: int = 5

    def __post_init__(self) -> None:
        """Validate FilterPolicy attributes."""
        for name in ("min_span_days", "min_partners_for_short_logs", "min_partners_absolute"):
            if getattr(self, name) < 0:
                raise ValueError(f"FilterPolicy.{name} must be >= 0")


@dataclass(frozen=True)
class Submission:
    """A parsed survey result together with its submission metadata.

    Attributes:
        worker_id: Crowd worker that submitted the result
        log: Parsed participant log
        submitted: Submission order key from the document, if present
        source: File the document was read from
    """

    worker_id: str
    log: ParticipantLog
    submitted: int | None = None
    source: str = ""


@dataclass(frozen=True)
class DedupeResult:
    """Outcome of dropping double submissions.

    Attributes:
        kept: One log per worker, in first-seen order
        duplicates: (worker_id, log) pairs that were not kept
    """

    kept: list[ParticipantLog]
    duplicates: list[tuple[str, ParticipantLog]] = field(default_factory=list)


@dataclass(frozen=True)
class Exclusion:
    """A log removed by the filter policy and the rule that removed it."""

    log: ParticipantLog
    reason: ExclusionReason


@dataclass(frozen=True)
class FilterResult:
    """Partition of a dataset into kept and excluded logs."""

    kept: list[ParticipantLog]
    excluded: list[Exclusion]


@dataclass(frozen=True)
class SurveySlot:
    """One questionnaire slot: the prompted partner and its interaction class."""

    partner_id: str
    interaction_class: InteractionClass


def _check_keys(data: Mapping[str, Any], known: Iterable[str], path: str) -> None:
    for key in data:
        if key not in known:
            logger.warning(f"Ignoring unknown key '{key}' at {path or 'document root'}")


def _mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise SchemaError(f"expected a mapping, got {type(value).__name__}", path)
    return value


def _sequence(value: Any, path: str) -> list[Any]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise SchemaError(f"expected a list, got {type(value).__name__}", path)
    return value


def _integer(value: Any, path: str, minimum: int | None = None, maximum: int | None = None) -> int:
    # bool is an int subclass; YAML true/false must not pass as 1/0
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"expected an integer, got {value!r}", path)
    if minimum is not None and value < minimum:
        raise SchemaError(f"value {value} is below the minimum {minimum}", path)
    if maximum is not None and value > maximum:
        raise SchemaError(f"value {value} is above the maximum {maximum}", path)
    return value


def _boolean(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaError(f"expected a boolean, got {value!r}", path)
    return value


def _text(value: Any, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"expected a non-empty string, got {value!r}", path)
    return value


def _optional_tag(data: Mapping[str, Any], path: str) -> str | None:
    tag = data.get("tag")
    return None if tag is None else _text(tag, f"{path}.tag")


def _required(data: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in data:
        raise SchemaError(f"missing required key '{key}'", path)
    return data[key]


def _parse_call(value: Any, path: str) -> CallRecord:
    data = _mapping(value, path)
    _check_keys(data, CALL_KEYS, path)
    raw_type = _required(data, "type", path)
    try:
        direction = CallDirection(raw_type)
    except ValueError:
        raise SchemaError(
            f"call type must be in, out or missed, got {raw_type!r}", f"{path}.type"
        ) from None
    duration = _integer(_required(data, "duration", path), f"{path}.duration", minimum=0)
    if direction is CallDirection.MISSED and duration != 0:
        raise SchemaError("missed call must have duration 0", f"{path}.duration")
    return CallRecord(
        relative_date=_integer(_required(data, "date", path), f"{path}.date", minimum=0),
        direction=direction,
        duration=duration,
        tag=_optional_tag(data, path),
    )


def _parse_message(value: Any, path: str) -> MessageRecord:
    data = _mapping(value, path)
    _check_keys(data, MESSAGE_KEYS, path)
    raw_type = _required(data, "type", path)
    try:
        direction = MessageDirection(raw_type)
    except ValueError:
        raise SchemaError(
            f"message type must be in or out, got {raw_type!r}", f"{path}.type"
        ) from None
    return MessageRecord(
        relative_date=_integer(_required(data, "date", path), f"{path}.date", minimum=0),
        direction=direction,
        length=_integer(_required(data, "length", path), f"{path}.length", minimum=1),
        tag=_optional_tag(data, path),
    )


def _parse_rating(value: Any, path: str) -> Rating:
    if value is None:
        return Rating()
    data = _mapping(value, path)
    _check_keys(data, RATING_KEYS, path)
    answers: dict[str, int | None] = {}
    for key, kind in RATING_KEYS.items():
        raw = data.get(key)
        answers[kind.value] = None if raw is None else _integer(raw, f"{path}.{key}", 1, 5)
    return Rating(**answers)


def _parse_partner(value: Any, path: str) -> PartnerRecord:
    data = _mapping(value, path)
    _check_keys(data, PARTNER_KEYS, path)
    position = data.get("surveyPosition")
    return PartnerRecord(
        partner_id=_text(_required(data, "id", path), f"{path}.id"),
        survey_position=(
            None
            if position is None
            else _integer(position, f"{path}.surveyPosition", 1, MAX_SURVEY_POSITION)
        ),
        is_human=_boolean(_required(data, "isHuman", path), f"{path}.isHuman"),
        is_favorite=_boolean(_required(data, "isFavorite", path), f"{path}.isFavorite"),
        rating=_parse_rating(data.get("rating"), f"{path}.rating"),
        calls=tuple(
            _parse_call(call, f"{path}.calls[{i}]")
            for i, call in enumerate(_sequence(data.get("calls"), f"{path}.calls"))
        ),
        messages=tuple(
            _parse_message(message, f"{path}.messages[{i}]")
            for i, message in enumerate(_sequence(data.get("messages"), f"{path}.messages"))
        ),
    )


def from_document(data: Mapping[str, Any], participant_id: str) -> ParticipantLog:
    """Build a validated participant log from a decoded survey-result mapping.

    Args:
        data: Decoded document following the canonical schema
        participant_id: Identifier used when the document carries none

    Returns:
        Validated ParticipantLog

    Raises:
        SchemaError: If a key is missing, a value is out of range or a log invariant fails
    """
    root = _mapping(data, "")
    _check_keys(root, TOP_LEVEL_KEYS, "")

    general = _mapping(_required(root, "general", ""), "general")
    _check_keys(general, GENERAL_KEYS, "general")
    active = general.get("activePartners")

    raw_id = root.get("participant")
    log = ParticipantLog(
        participant_id=participant_id if raw_id is None else _text(raw_id, "participant"),
        address_book_size=_integer(
            _required(general, "addressBookSize", "general"), "general.addressBookSize", 0
        ),
        total_calls=_integer(_required(general, "totalCalls", "general"), "general.totalCalls", 0),
        total_messages=_integer(
            _required(general, "totalMessages", "general"), "general.totalMessages", 0
        ),
        active_partners=None if active is None else _integer(active, "general.activePartners", 0),
        partners=tuple(
            _parse_partner(partner, f"partners[{i}]")
            for i, partner in enumerate(_sequence(_required(root, "partners", ""), "partners"))
        ),
    )

    violations = validate_log(log)
    if violations:
        first = violations[0]
        raise SchemaError(f"{first.message} ({first.code.value})", first.path)
    return log


def _load_yaml(document: str) -> Mapping[str, Any]:
    try:
        data = yaml.safe_load(document)
    except yaml.YAMLError as e:
        raise ParseError(f"Failed to parse survey result YAML: {e}") from e
    if not isinstance(data, Mapping):
        raise ParseError("Survey result must be a YAML mapping at the top level")
    return data


def _document_id(document: str) -> str:
    return "p-" + hashlib.sha256(document.encode("utf-8")).hexdigest()[:16]


def parse_result(document: str, participant_id: str | None = None) -> ParticipantLog:
    """Parse a YAML survey-result document.

    Args:
        document: UTF-8 YAML text in the canonical schema
        participant_id: Fallback identifier when the document has no ``participant`` key;
            defaults to a digest of the document text

    Returns:
        Parsed and validated ParticipantLog

    Raises:
        ParseError: If the document is not well-formed YAML
        SchemaError: If the document violates the schema (carries the offending path)
    """
    data = _load_yaml(document)
    return from_document(data, participant_id or _document_id(document))


def parse_submission(document: str, source: str = "") -> Submission:
    """Parse a survey-result document together with its submission metadata.

    The worker id falls back to the participant id when the document has no
    ``worker`` key.
    """
    data = _load_yaml(document)
    log = from_document(data, _document_id(document))
    worker = data.get("worker")
    submitted = data.get("submitted")
    return Submission(
        worker_id=log.participant_id if worker is None else _text(str(worker), "worker"),
        log=log,
        submitted=None if submitted is None else _integer(submitted, "submitted"),
        source=source,
    )


def _expand_paths(paths: Iterable[Path]) -> list[Path]:
    files: list[Path] = []
    for path in paths:
        if path.is_dir():
            files.extend(sorted(p for p in path.iterdir() if p.suffix in DOCUMENT_SUFFIXES))
        else:
            files.append(path)
    return files


def load_corpus(paths: Iterable[Path]) -> list[Submission]:
    """Parse every survey document in the given files and directories.

    Directories contribute their ``*.yaml``/``*.yml`` files in name order. The result is
    ordered chronologically by the ``submitted`` key; documents without it keep file
    order after those that have it.

    Raises:
        ParseError, SchemaError: On the first malformed document (message names the file)
    """
    submissions: list[Submission] = []
    for file in _expand_paths(paths):
        text = read_text(file)
        try:
            submissions.append(parse_submission(text, source=str(file)))
        except SchemaError as e:
            raise SchemaError(f"{file}: {e}", e.path) from e
        except ParseError as e:
            raise ParseError(f"{file}: {e}") from e
        logger.debug(f"Parsed {file}")
    return sorted(submissions, key=lambda s: (s.submitted is None, s.submitted or 0))


def to_document(log: ParticipantLog) -> dict[str, Any]:
    """Convert a participant log to the canonical document mapping.

    Optional values that are absent are omitted, so ``from_document`` restores the
    log field for field.
    """
    general: dict[str, Any] = {
        "addressBookSize": log.address_book_size,
        "totalCalls": log.total_calls,
        "totalMessages": log.total_messages,
    }
    if log.active_partners is not None:
        general["activePartners"] = log.active_partners

    partners: list[dict[str, Any]] = []
    for partner in log.partners:
        entry: dict[str, Any] = {"id": partner.partner_id}
        if partner.survey_position is not None:
            entry["surveyPosition"] = partner.survey_position
        entry["isHuman"] = partner.is_human
        entry["isFavorite"] = partner.is_favorite
        rating = {
            key: partner.rating.get(kind)
            for key, kind in RATING_KEYS.items()
            if partner.rating.get(kind) is not None
        }
        if rating:
            entry["rating"] = rating
        entry["calls"] = [
            _with_tag(
                {"date": c.relative_date, "type": c.direction.value, "duration": c.duration}, c.tag
            )
            for c in partner.calls
        ]
        entry["messages"] = [
            _with_tag(
                {"date": m.relative_date, "type": m.direction.value, "length": m.length}, m.tag
            )
            for m in partner.messages
        ]
        partners.append(entry)

    return {"participant": log.participant_id, "general": general, "partners": partners}


def _with_tag(event: dict[str, Any], tag: str | None) -> dict[str, Any]:
    if tag is not None:
        event["tag"] = tag
    return event


def dump_result(log: ParticipantLog) -> str:
    """Serialize a participant log as a canonical YAML survey-result document."""
    return yaml.safe_dump(to_document(log), sort_keys=False, allow_unicode=True)


def write_logs_jsonl(path: Path, logs: Iterable[ParticipantLog]) -> None:
    """Atomically write logs as line-delimited JSON documents."""
    write_jsonl(path, (to_document(log) for log in logs))


def read_logs_jsonl(path: Path) -> list[ParticipantLog]:
    """Read logs written by ``write_logs_jsonl``.

    Raises:
        SchemaError: If a line violates the schema (path is prefixed with the line number)
    """
    logs: list[ParticipantLog] = []
    for number, record in enumerate(read_jsonl(path), 1):
        try:
            logs.append(from_document(record, f"{path.stem}-{number}"))
        except SchemaError as e:
            raise SchemaError(f"{path}:{number}: {e}", e.path) from e
    return logs


def dedupe_participants(submissions: Sequence[tuple[str, ParticipantLog]]) -> DedupeResult:
    """Keep one log per worker: the chronologically first complete submission.

    Input order is chronological. A submission is complete when its log passes
    ``validate_log``; a worker whose submissions are all incomplete keeps the first one.

    Args:
        submissions: (worker_id, log) pairs in submission order

    Returns:
        DedupeResult with kept logs and reported duplicates
    """
    chosen: dict[str, int] = {}
    for index, (worker_id, log) in enumerate(submissions):
        if worker_id not in chosen:
            chosen[worker_id] = index
            continue
        current = submissions[chosen[worker_id]][1]
        if validate_log(current) and not validate_log(log):
            chosen[worker_id] = index

    kept_indices = set(chosen.values())
    kept = [log for i, (_, log) in enumerate(submissions) if i in kept_indices]
    duplicates = [pair for i, pair in enumerate(submissions) if i not in kept_indices]
    for worker_id, log in duplicates:
        logger.info(f"Dropping double submission {log.participant_id} of worker {worker_id}")
    return DedupeResult(kept=kept, duplicates=duplicates)


def exclusion_reason(log: ParticipantLog, policy: FilterPolicy) -> ExclusionReason | None:
    """Return the filter rule that excludes a log, or None if it is kept."""
    partner_count = len(log.partners)
    span = log.log_span_days or 0.0
    if partner_count < policy.min_partners_absolute:
        return ExclusionReason.TOO_FEW_PARTNERS_ABSOLUTE
    if span < policy.min_span_days and partner_count < policy.min_partners_for_short_logs:
        return ExclusionReason.SHORT_LOG_FEW_PARTNERS
    if not log.rated_partners:
        return ExclusionReason.NO_RATINGS
    return None


def filter_dataset(logs: Sequence[ParticipantLog], policy: FilterPolicy) -> FilterResult:
    """Split logs into kept and excluded according to the filter policy.

    A log is excluded if it is short and sparse, has too few partners in absolute terms,
    or carries no rating at all. The two output lists partition the input.

    Args:
        logs: Validated participant logs
        policy: Filter thresholds

    Returns:
        FilterResult with kept logs and exclusions in input order
    """
    kept: list[ParticipantLog] = []
    excluded: list[Exclusion] = []
    for log in logs:
        reason = exclusion_reason(log, policy)
        if reason is None:
            kept.append(log)
        else:
            logger.info(f"Excluding {log.participant_id}: {reason.value}")
            excluded.append(Exclusion(log=log, reason=reason))
    return FilterResult(kept=kept, excluded=excluded)


def select_survey_partners(log: ParticipantLog, n: int = 20, seed: int = 0) -> list[SurveySlot]:
    """Choose the partners prompted in the questionnaire.

    Slots cycle Most -> Least -> Random. Most takes the highest remaining interaction
    count, Least the lowest remaining non-zero count, Random draws uniformly from the
    partners not selected yet. Ties break by ascending partner id.

    Args:
        log: Participant log with at least one partner
        n: Number of questionnaire slots
        seed: Seed for the random class

    Returns:
        min(n, partners) slots with distinct partners
    """
    rng = np.random.default_rng(seed)
    by_id = sorted(log.partners, key=lambda p: p.partner_id)
    most_first = sorted(by_id, key=lambda p: -p.interaction_count)
    least_first = [
        p for p in sorted(by_id, key=lambda p: p.interaction_count) if p.interaction_count >= 1
    ]

    selected: set[str] = set()
    slots: list[SurveySlot] = []
    for index in range(min(n, len(by_id))):
        wanted = CLASS_CYCLE[index % len(CLASS_CYCLE)]
        pool = {
            InteractionClass.MOST_INTERACTIONS: most_first,
            InteractionClass.LEAST_INTERACTIONS: least_first,
        }.get(wanted)
        candidate = None
        if pool is not None:
            candidate = next((p for p in pool if p.partner_id not in selected), None)
        if candidate is None:
            wanted = InteractionClass.RANDOM
            remaining = [p for p in by_id if p.partner_id not in selected]
            candidate = remaining[int(rng.integers(len(remaining)))]
        selected.add(candidate.partner_id)
        slots.append(SurveySlot(partner_id=candidate.partner_id, interaction_class=wanted))
    return slots


def class_from_position(position: int) -> InteractionClass:
    """Interaction class of the partner prompted at a 1-based questionnaire position."""
    if not 1 <= position <= MAX_SURVEY_POSITION:
        raise ValueError(f"Survey position must be 1-{MAX_SURVEY_POSITION}, got {position}")
    return CLASS_CYCLE[(position - 1) % len(CLASS_CYCLE)]
