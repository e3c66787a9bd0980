"""Builders for participant logs and rated feature datasets used across tests."""

import os
import subprocess
import sys
from pathlib import Path

from socialtrust.models import (
    SECONDS_PER_DAY,
    CallDirection,
    CallRecord,
    FeatureVector,
    MessageDirection,
    MessageRecord,
    ParticipantLog,
    PartnerRecord,
    Rating,
)


def _dates(count: int, start: int, span_days: float) -> list[int]:
    if count == 0:
        return []
    if count == 1:
        return [start]
    step = span_days * SECONDS_PER_DAY / (count - 1)
    return [start + round(i * step) for i in range(count)]


def make_partner(
    partner_id: str,
    calls: int = 1,
    msgs: int = 0,
    duration: int = 60,
    length: int = 40,
    span_days: float = 30.0,
    start: int = 1000,
    rating: Rating | None = None,
    favorite: bool = False,
    position: int | None = None,
    human: bool = True,
    tag: str | None = None,
) -> PartnerRecord:
    """Partner with evenly spaced calls and messages over ``span_days``."""
    dates = _dates(calls + msgs, start, span_days)
    return PartnerRecord(
        partner_id=partner_id,
        rating=rating or Rating(),
        is_human=human,
        is_favorite=favorite,
        calls=tuple(
            CallRecord(
                relative_date=d, direction=CallDirection.OUTGOING, duration=duration, tag=tag
            )
            for d in dates[:calls]
        ),
        messages=tuple(
            MessageRecord(
                relative_date=d, direction=MessageDirection.INCOMING, length=length, tag=tag
            )
            for d in dates[calls:]
        ),
        survey_position=position,
    )


def make_log(
    participant_id: str,
    partners: list[PartnerRecord],
    address_book_size: int | None = None,
    extra_calls: int = 0,
    extra_messages: int = 0,
) -> ParticipantLog:
    """Participant log whose general section matches its partners."""
    return ParticipantLog(
        participant_id=participant_id,
        address_book_size=len(partners) + 5 if address_book_size is None else address_book_size,
        total_calls=sum(len(p.calls) for p in partners) + extra_calls,
        total_messages=sum(len(p.messages) for p in partners) + extra_messages,
        partners=tuple(partners),
    )


def make_sparse_log(
    participant_id: str, partner_count: int, span_days: float, rated: bool = True
) -> ParticipantLog:
    """Log with ``partner_count`` partners spanning exactly ``span_days``."""
    partners = [
        make_partner(
            f"{participant_id}-q{j}",
            calls=2,
            span_days=span_days,
            rating=Rating(trust_info=3) if rated and j == 0 else None,
            position=1 if rated and j == 0 else None,
        )
        for j in range(partner_count)
    ]
    return make_log(participant_id, partners)


def make_corpus(participants: int = 6) -> list[ParticipantLog]:
    """Logs whose rated partners communicate more with rising trust.

    Each participant has 13 surveyed partners rated 1,1,1,2,2,2,3,3,3,4,4,4,5 on
    trust_info and closeness, plus two unrated partners. Partners rated 4 or 5 are
    favorites.
    """
    logs: list[ParticipantLog] = []
    for i in range(participants):
        partners: list[PartnerRecord] = []
        for j in range(13):
            level = min(5, 1 + j // 3)
            partners.append(
                make_partner(
                    f"p{i}-{j:02d}",
                    calls=j + 1 + i % 2,
                    msgs=2 * j + 1,
                    duration=30 + 10 * j,
                    length=20 + 5 * j,
                    rating=Rating(
                        closeness=level,
                        trust_info=level,
                        trust_best=max(1, level - (j + i) % 2),
                    ),
                    favorite=level >= 4,
                    position=j + 1,
                )
            )
        partners.append(make_partner(f"p{i}-u0", calls=1, msgs=1))
        partners.append(make_partner(f"p{i}-u1", calls=3, msgs=0))
        logs.append(make_log(f"participant-{i}", partners))
    return logs


def rated(trust_info: int | None = None, closeness: int | None = None, **features) -> tuple:
    """(FeatureVector, Rating) pair for metric tests."""
    return FeatureVector(**features), Rating(closeness=closeness, trust_info=trust_info)


def survey_document(**overrides) -> dict:
    """Minimal valid survey-result mapping in the canonical schema."""
    document = {
        "participant": "p-001",
        "general": {"addressBookSize": 120, "totalCalls": 3, "totalMessages": 2},
        "partners": [
            {
                "id": "a1",
                "surveyPosition": 1,
                "isHuman": True,
                "isFavorite": True,
                "rating": {"closeness": 4, "trustInfo": 5, "trustBest": 4},
                "calls": [
                    {"date": 1000, "type": "out", "duration": 120, "tag": "mobile"},
                    {"date": 5000, "type": "missed", "duration": 0},
                ],
                "messages": [{"date": 2000, "type": "in", "length": 42}],
            },
            {
                "id": "b2",
                "isHuman": False,
                "isFavorite": False,
                "calls": [{"date": 900000, "type": "in", "duration": 30}],
                "messages": [{"date": 3000, "type": "out", "length": 7}],
            },
        ],
    }
    document.update(overrides)
    return document


REPO_ROOT = Path(__file__).resolve().parent.parent


def run_cli(*args: str, cwd: Path) -> subprocess.CompletedProcess[str]:
    """Run ``python -m socialtrust`` in ``cwd`` with the source tree importable."""
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(filter(None, [str(REPO_ROOT), env.get("PYTHONPATH")]))
    return subprocess.run(
        [sys.executable, "-m", "socialtrust", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
        env=env,
    )
