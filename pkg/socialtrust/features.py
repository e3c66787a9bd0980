"""Per-partner communication indicators.

Computes the absolute indicators (counts, summed durations and lengths) and the
relative indicators (share of the participant's calls and messages) for every partner,
and converts them to and from the features CSV artifact.
"""

from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from .exceptions import ArtifactError
from .file_operations import read_frame, write_frame
from .models import (
    LIKERT_LEVELS,
    MAX_SURVEY_POSITION,
    FeatureVector,
    ParticipantLog,
    PartnerRecord,
    Rating,
    RatingKind,
)

KEYS = ["participant_id", "partner_id"]
COUNT_COLUMNS = ["num_calls", "num_msgs", "dur_calls", "len_msgs"]
RATE_COLUMNS = ["rel_calls", "rel_msgs", "avg_call_dur", "avg_msg_len", "interactions_per_day"]
RATING_COLUMNS = {
    RatingKind.TRUST_INFO: "rating_trust_info",
    RatingKind.CLOSENESS: "rating_closeness",
    RatingKind.TRUST_BEST: "rating_trust_best",
}

FEATURE_COLUMNS = (
    *KEYS,
    *COUNT_COLUMNS,
    *RATE_COLUMNS,
    "is_favorite",
    *RATING_COLUMNS.values(),
    "survey_position",
)

# Columns after rating_trust_info may be absent from hand-made files
REQUIRED_COLUMNS = FEATURE_COLUMNS[: FEATURE_COLUMNS.index("rating_trust_info") + 1]


@dataclass(frozen=True)
class FeatureRow:
    """One row of the features artifact.

    Attributes:
        participant_id: Participant the partner belongs to
        partner_id: Partner identifier
        features: Communication indicators
        rating: Survey answers for the partner
        survey_position: Questionnaire position, if the partner was prompted
    """

    participant_id: str
    partner_id: str
    features: FeatureVector
    rating: Rating
    survey_position: int | None = None


def _percent(part: int, whole: int) -> float:
    return 100.0 * part / whole if whole > 0 else 0.0


def _features(
    partner: PartnerRecord, call_total: int, message_total: int, span_days: float
) -> FeatureVector:
    num_calls = len(partner.calls)
    num_msgs = len(partner.messages)
    dur_calls = sum(call.duration for call in partner.calls)
    len_msgs = sum(message.length for message in partner.messages)
    return FeatureVector(
        num_calls=num_calls,
        num_msgs=num_msgs,
        dur_calls=dur_calls,
        len_msgs=len_msgs,
        rel_calls=_percent(num_calls, call_total),
        rel_msgs=_percent(num_msgs, message_total),
        avg_call_dur=dur_calls / num_calls if num_calls else 0.0,
        avg_msg_len=len_msgs / num_msgs if num_msgs else 0.0,
        interactions_per_day=(num_calls + num_msgs) / max(span_days, 1.0),
        is_favorite=partner.is_favorite,
    )


def _totals(log: ParticipantLog) -> tuple[int, int, float]:
    # Relative indicators divide by partner events, not the general-section totals
    call_total = sum(len(p.calls) for p in log.partners)
    message_total = sum(len(p.messages) for p in log.partners)
    return call_total, message_total, log.log_span_days or 0.0


def extract_features(log: ParticipantLog, partner: PartnerRecord) -> FeatureVector:
    """Compute the indicators of one partner of a participant log.

    Args:
        log: Participant log the partner belongs to
        partner: Partner record (must be one of ``log.partners``)

    Returns:
        FeatureVector for the partner
    """
    return _features(partner, *_totals(log))


def extract_all(log: ParticipantLog) -> dict[str, FeatureVector]:
    """Compute the indicators of every partner of a participant log.

    Returns:
        Mapping partner_id -> FeatureVector, in partner order
    """
    totals = _totals(log)
    return {partner.partner_id: _features(partner, *totals) for partner in log.partners}


def _event_frames(
    logs: Iterable[ParticipantLog],
) -> tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    partners: list[tuple[object, ...]] = []
    calls: list[tuple[str, str, int]] = []
    messages: list[tuple[str, str, int]] = []
    for log in logs:
        span = log.log_span_days or 0.0
        for partner in log.partners:
            key = (log.participant_id, partner.partner_id)
            partners.append(
                (
                    *key,
                    partner.is_favorite,
                    *(partner.rating.get(kind) for kind in RATING_COLUMNS),
                    partner.survey_position,
                    span,
                )
            )
            calls.extend((*key, call.duration) for call in partner.calls)
            messages.extend((*key, message.length) for message in partner.messages)
    partner_columns = [*KEYS, "is_favorite", *RATING_COLUMNS.values(), "survey_position", "span"]
    return (
        pd.DataFrame(partners, columns=partner_columns),
        pd.DataFrame(calls, columns=[*KEYS, "duration"]),
        pd.DataFrame(messages, columns=[*KEYS, "length"]),
    )


def _share(part: pd.Series, whole: pd.Series) -> pd.Series:
    return (100.0 * part / whole.where(whole > 0)).fillna(0.0)


def feature_frame(logs: Iterable[ParticipantLog]) -> pd.DataFrame:
    """Aggregate the logs into one row per (participant, partner).

    Returns:
        DataFrame with ``FEATURE_COLUMNS``, partners in log order
    """
    partners, calls, messages = _event_frames(logs)
    if partners.empty:
        return pd.DataFrame(columns=list(FEATURE_COLUMNS))

    call_agg = calls.groupby(KEYS).agg(
        num_calls=("duration", "size"), dur_calls=("duration", "sum")
    )
    message_agg = messages.groupby(KEYS).agg(
        num_msgs=("length", "size"), len_msgs=("length", "sum")
    )
    frame = partners.merge(call_agg.reset_index(), on=KEYS, how="left").merge(
        message_agg.reset_index(), on=KEYS, how="left"
    )
    frame[COUNT_COLUMNS] = frame[COUNT_COLUMNS].fillna(0).astype("int64")

    by_participant = frame.groupby("participant_id", sort=False)
    frame["rel_calls"] = _share(frame["num_calls"], by_participant["num_calls"].transform("sum"))
    frame["rel_msgs"] = _share(frame["num_msgs"], by_participant["num_msgs"].transform("sum"))
    frame["avg_call_dur"] = (frame["dur_calls"] / frame["num_calls"]).fillna(0.0)
    frame["avg_msg_len"] = (frame["len_msgs"] / frame["num_msgs"]).fillna(0.0)
    frame["interactions_per_day"] = (frame["num_calls"] + frame["num_msgs"]) / frame[
        "span"
    ].clip(lower=1.0)
    frame["is_favorite"] = frame["is_favorite"].astype("int64")
    for column in (*RATING_COLUMNS.values(), "survey_position"):
        frame[column] = frame[column].astype("Int64")
    return frame[list(FEATURE_COLUMNS)]


def _optional(value: object) -> int | None:
    return None if pd.isna(value) else int(value)  # type: ignore[call-overload]


def rows_from_frame(frame: pd.DataFrame) -> list[FeatureRow]:
    """Convert a typed features DataFrame into FeatureRows.

    Raises:
        ValueError: If a row violates the FeatureVector invariants
    """
    rows: list[FeatureRow] = []
    for record in frame.to_dict("records"):
        rows.append(
            FeatureRow(
                participant_id=str(record["participant_id"]),
                partner_id=str(record["partner_id"]),
                features=FeatureVector(
                    **{column: int(record[column]) for column in COUNT_COLUMNS},
                    **{column: float(record[column]) for column in RATE_COLUMNS},
                    is_favorite=bool(record["is_favorite"]),
                ),
                rating=Rating(
                    **{kind.value: _optional(record[c]) for kind, c in RATING_COLUMNS.items()}
                ),
                survey_position=_optional(record["survey_position"]),
            )
        )
    return rows


def feature_table(logs: Iterable[ParticipantLog]) -> list[FeatureRow]:
    """Flatten the features of every partner of every log into rows."""
    return rows_from_frame(feature_frame(logs))


def _rows_to_frame(rows: Iterable[FeatureRow]) -> pd.DataFrame:
    records = [
        {
            "participant_id": row.participant_id,
            "partner_id": row.partner_id,
            **{column: getattr(row.features, column) for column in COUNT_COLUMNS},
            **{column: getattr(row.features, column) for column in RATE_COLUMNS},
            "is_favorite": int(row.features.is_favorite),
            **{c: row.rating.get(kind) for kind, c in RATING_COLUMNS.items()},
            "survey_position": row.survey_position,
        }
        for row in rows
    ]
    frame = pd.DataFrame(records, columns=list(FEATURE_COLUMNS))
    for column in (*RATING_COLUMNS.values(), "survey_position"):
        frame[column] = frame[column].astype("Int64")
    return frame


def write_feature_table(path: Path, rows: Iterable[FeatureRow]) -> None:
    """Atomically write feature rows as CSV."""
    write_frame(path, _rows_to_frame(rows))


def _first_bad_line(mask: pd.Series) -> int:
    # Header is line 1
    return int(mask.idxmax()) + 2


def _optional_integers(
    path: Path, frame: pd.DataFrame, column: str, low: int, high: int
) -> pd.Series:
    stripped = frame[column].str.strip()
    try:
        values = pd.to_numeric(stripped.where(stripped != ""))
    except ValueError as e:
        raise ArtifactError(f"{path}: malformed {column}: {e}") from e
    present = values.notna()
    bad = present & ((values % 1 != 0) | (values < low) | (values > high))
    if bad.any():
        line = _first_bad_line(bad)
        raise ArtifactError(
            f"{path}:{line}: {column} must be an integer {low}-{high}, "
            f"got {frame[column][bad].iloc[0]!r}"
        )
    return values.astype("Int64")


def _typed(path: Path, frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.reindex(columns=list(FEATURE_COLUMNS), fill_value="")
    try:
        typed = pd.DataFrame({key: frame[key].astype(str) for key in KEYS}, index=frame.index)
        for column in COUNT_COLUMNS:
            typed[column] = frame[column].str.strip().astype("int64")
        for column in RATE_COLUMNS:
            typed[column] = frame[column].str.strip().astype("float64")
    except ValueError as e:
        raise ArtifactError(f"{path}: malformed feature value: {e}") from e
    typed["is_favorite"] = frame["is_favorite"].str.strip().str.lower().isin(("1", "true"))
    for column in RATING_COLUMNS.values():
        typed[column] = _optional_integers(path, frame, column, LIKERT_LEVELS[0], LIKERT_LEVELS[-1])
    typed["survey_position"] = _optional_integers(
        path, frame, "survey_position", 1, MAX_SURVEY_POSITION
    )
    return typed


def read_feature_table(path: Path) -> list[FeatureRow]:
    """Read a features CSV written by ``write_feature_table``.

    Columns after ``rating_trust_info`` are optional so that hand-made files with the
    minimal column set are accepted. Ratings must lie in 1-5 and survey positions in
    1-20 when present.

    Raises:
        ArtifactError: If a column is missing or a value is malformed or out of range
    """
    typed = _typed(path, read_frame(path, required=REQUIRED_COLUMNS))
    try:
        return rows_from_frame(typed)
    except ValueError as e:
        raise ArtifactError(f"{path}: malformed feature row: {e}") from e
