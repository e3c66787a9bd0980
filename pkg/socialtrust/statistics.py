"""Correlation analysis, interaction-class histograms and corpus summaries."""

import itertools
import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from scipy import stats as sps

from .exceptions import DegenerateInput
from .ingest import InteractionClass
from .models import LIKERT_LEVELS, FeatureVector, ParticipantLog, Rating, RatingKind

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.99
WEEK_DAYS = 7.0
MONTH_DAYS = 30.0


class CorrelationMethod(Enum):
    """Correlation coefficient used for rating comparisons."""

    PEARSON = "pearson"
    SPEARMAN = "spearman"


def _vectors(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    if len(x) != len(y):
        raise DegenerateInput(f"Length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise DegenerateInput(f"Need at least 3 observations, got {len(x)}")
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateInput("Input has zero variance")
    return a, b


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation coefficient of two equally long samples.

    Raises:
        DegenerateInput: If the samples differ in length, hold fewer than 3 values or
            one of them is constant
    """
    a, b = _vectors(x, y)
    da = a - a.mean()
    db = b - b.mean()
    r = float(np.sum(da * db) / math.sqrt(float(np.sum(da * da)) * float(np.sum(db * db))))
    return min(1.0, max(-1.0, r))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation (Pearson over average ranks)."""
    a, b = _vectors(x, y)
    return pearson(sps.rankdata(a).tolist(), sps.rankdata(b).tolist())


def correlate(x: Sequence[float], y: Sequence[float], method: CorrelationMethod) -> float:
    """Dispatch to the requested correlation coefficient."""
    return spearman(x, y) if method is CorrelationMethod.SPEARMAN else pearson(x, y)


@dataclass(frozen=True)
class Significance:
    """Two-sided significance test of a correlation coefficient.

    Attributes:
        n: Sample size
        t_statistic: r * sqrt((n - 2) / (1 - r^2))
        critical_value: Two-sided 99% critical value of t with n - 2 degrees of freedom
        significant: Whether |t| exceeds the critical value
    """

    n: int
    t_statistic: float
    critical_value: float
    significant: bool


def critical_t(df: int, level: float = SIGNIFICANCE_LEVEL) -> float:
    """Two-sided critical value of Student's t distribution."""
    return float(sps.t.ppf(1.0 - (1.0 - level) / 2.0, df))


def correlation_significance(r: float, n: int) -> Significance:
    """Test a correlation coefficient for significance at the 99% level.

    Raises:
        DegenerateInput: If n < 3 or |r| >= 1
    """
    if n < 3:
        raise DegenerateInput(f"Significance needs n >= 3, got {n}")
    if abs(r) >= 1.0:
        raise DegenerateInput(f"Significance undefined for |r| >= 1 (r={r})")
    t_statistic = r * math.sqrt((n - 2) / (1.0 - r * r))
    critical = critical_t(n - 2)
    return Significance(
        n=n,
        t_statistic=t_statistic,
        critical_value=critical,
        significant=abs(t_statistic) > critical,
    )


@dataclass(frozen=True)
class CorrelationEntry:
    """Correlation of one pair of rating statements.

    Attributes:
        first: First statement of the pair
        second: Second statement of the pair
        coefficient: Correlation coefficient, None when it is undefined
        partners: Significance over the jointly rated partners
        participants: Significance over the participants
        n_pairs: Number of partners rated on both statements
        reason: Why the coefficient is undefined
    """

    first: RatingKind
    second: RatingKind
    coefficient: float | None
    partners: Significance | None
    participants: Significance | None
    n_pairs: int = 0
    reason: str | None = None

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""

        def _sig(sig: Significance | None) -> dict[str, Any] | None:
            if sig is None:
                return None
            return {
                "n": sig.n,
                "t": round(sig.t_statistic, 6),
                "critical": round(sig.critical_value, 6),
                "significant_99": sig.significant,
            }

        return {
            "first": self.first.value,
            "second": self.second.value,
            "r": None if self.coefficient is None else round(self.coefficient, 6),
            "n_pairs": self.n_pairs,
            "reason": self.reason,
            "partners": _sig(self.partners),
            "participants": _sig(self.participants),
        }


def _try_significance(r: float, n: int) -> Significance | None:
    try:
        return correlation_significance(r, n)
    except DegenerateInput as e:
        logger.debug(f"No significance for r={r}, n={n}: {e}")
        return None


def correlation_matrix(
    ratings: Iterable[Rating],
    n_participants: int,
    method: CorrelationMethod = CorrelationMethod.PEARSON,
) -> list[CorrelationEntry]:
    """Correlate every pair of rating statements over partners rated on both.

    Significance is reported for two sample sizes: the number of partners in the pair
    and the number of participants.

    A pair with fewer than 3 jointly rated partners or without variance gets no
    coefficient; the entry records why.
    """
    rated = list(ratings)
    entries: list[CorrelationEntry] = []
    for first, second in itertools.combinations(RatingKind, 2):
        pairs = [
            (a, b)
            for rating in rated
            if (a := rating.get(first)) is not None and (b := rating.get(second)) is not None
        ]
        try:
            r = correlate([p[0] for p in pairs], [p[1] for p in pairs], method)
        except DegenerateInput as e:
            logger.warning(f"No correlation for {first.value}/{second.value}: {e}")
            entries.append(
                CorrelationEntry(first, second, None, None, None, len(pairs), str(e))
            )
            continue
        entries.append(
            CorrelationEntry(
                first=first,
                second=second,
                coefficient=r,
                partners=_try_significance(r, len(pairs)),
                participants=_try_significance(r, n_participants),
                n_pairs=len(pairs),
            )
        )
    return entries


def format_correlations(entries: Sequence[CorrelationEntry]) -> str:
    """Render the correlation matrix as a text table."""
    kinds = list(RatingKind)
    lookup = {(k, k): 1.0 for k in kinds}
    for e in entries:
        if e.coefficient is not None:
            lookup[(e.first, e.second)] = lookup[(e.second, e.first)] = e.coefficient
    width = max(len(k.value) for k in kinds) + 2
    lines = [" " * width + "".join(f"{k.value:>{width}}" for k in kinds)]
    for row in kinds:
        cells = "".join(f"{lookup.get((row, col), math.nan):>{width}.4f}" for col in kinds)
        lines.append(f"{row.value:<{width}}{cells}")
    flags = [e.partners.significant for e in entries if e.partners is not None]
    if flags and len(flags) == len(entries) and all(flags):
        lines.append("All correlations are statistically significant (99%)")
    return "\n".join(lines)


ClassHistogram = dict[InteractionClass, dict[int, int]]


def class_distribution(
    dataset: Iterable[tuple[str, Rating]],
    assignment: Mapping[str, InteractionClass],
    rating_kind: RatingKind = RatingKind.TRUST_INFO,
) -> ClassHistogram:
    """Histogram of rating levels per interaction class.

    Partners without a class assignment or without an answer are not counted.

    Args:
        dataset: (partner_id, Rating) pairs
        assignment: partner_id -> interaction class
        rating_kind: Statement whose answers are counted

    Returns:
        For every class, a level -> count mapping over levels 1-5
    """
    histogram: ClassHistogram = {cls: dict.fromkeys(LIKERT_LEVELS, 0) for cls in InteractionClass}
    for partner_id, rating in dataset:
        level = rating.get(rating_kind)
        cls = assignment.get(partner_id)
        if level is None or cls is None:
            continue
        histogram[cls][level] += 1
    return histogram


def histogram_rows(histogram: ClassHistogram) -> list[dict[str, Any]]:
    """Flatten class histograms into CSV rows (class, level, count)."""
    return [
        {"interaction_class": cls.value, "level": level, "count": counts[level]}
        for cls, counts in histogram.items()
        for level in LIKERT_LEVELS
    ]


@dataclass(frozen=True)
class LevelMeans:
    """Mean indicators of partners at one rating level."""

    level: int
    partners: int
    num_calls: float
    num_msgs: float
    dur_calls: float
    len_msgs: float
    rel_calls: float
    rel_msgs: float


def level_means(
    dataset: Iterable[tuple[FeatureVector, Rating]],
    rating_kind: RatingKind = RatingKind.TRUST_INFO,
) -> list[LevelMeans]:
    """Average absolute and relative communication per rating level.

    Levels without partners are omitted.
    """
    grouped: dict[int, list[FeatureVector]] = {}
    for fv, rating in dataset:
        level = rating.get(rating_kind)
        if level is not None:
            grouped.setdefault(level, []).append(fv)
    means: list[LevelMeans] = []
    for level in LIKERT_LEVELS:
        vectors = grouped.get(level)
        if not vectors:
            continue
        means.append(
            LevelMeans(
                level=level,
                partners=len(vectors),
                num_calls=float(np.mean([fv.num_calls for fv in vectors])),
                num_msgs=float(np.mean([fv.num_msgs for fv in vectors])),
                dur_calls=float(np.mean([fv.dur_calls for fv in vectors])),
                len_msgs=float(np.mean([fv.len_msgs for fv in vectors])),
                rel_calls=float(np.mean([fv.rel_calls for fv in vectors])),
                rel_msgs=float(np.mean([fv.rel_msgs for fv in vectors])),
            )
        )
    return means


@dataclass(frozen=True)
class CorpusSummary:
    """General observations over a set of participant logs."""

    participants: int
    partners: int
    calls: int
    messages: int
    rated_share: float
    address_book_mean: float
    address_book_sd: float
    address_book_min: int
    address_book_max: int
    active_partners_mean: float
    calls_mean: float
    messages_mean: float
    span_mean_days: float
    span_sd_days: float
    span_over_week: float
    span_over_month: float
    favorite_adopters: int
    favorites_per_adopter: float
    tagging_participants: int
    tag_counts: dict[str, int]
    volume_span_correlation: float | None

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping with rounded floats."""
        return {
            key: round(value, 4) if isinstance(value, float) else value
            for key, value in self.__dict__.items()
        }


def summarize_corpus(logs: Sequence[ParticipantLog]) -> CorpusSummary:
    """Summarize a corpus the way the general observations of a survey are reported.

    Raises:
        DegenerateInput: If the corpus is empty
    """
    if not logs:
        raise DegenerateInput("Cannot summarize an empty corpus")
    book = np.array([log.address_book_size for log in logs], dtype=np.float64)
    spans = np.array([log.log_span_days or 0.0 for log in logs], dtype=np.float64)
    volumes = [float(log.event_count) for log in logs]
    partners = [p for log in logs for p in log.partners]
    favorites = [sum(p.is_favorite for p in log.partners) for log in logs]
    adopters = [count for count in favorites if count > 0]
    tags: Counter[str] = Counter()
    tagging = 0
    for log in logs:
        labels = [
            event.tag
            for p in log.partners
            for event in (*p.calls, *p.messages)
            if event.tag is not None
        ]
        tagging += bool(labels)
        tags.update(labels)
    try:
        volume_span = pearson(volumes, spans.tolist())
    except DegenerateInput:
        volume_span = None
    return CorpusSummary(
        participants=len(logs),
        partners=len(partners),
        calls=sum(len(p.calls) for p in partners),
        messages=sum(len(p.messages) for p in partners),
        rated_share=sum(not p.rating.is_empty for p in partners) / max(len(partners), 1),
        address_book_mean=float(book.mean()),
        address_book_sd=float(book.std(ddof=1)) if len(logs) > 1 else 0.0,
        address_book_min=int(book.min()),
        address_book_max=int(book.max()),
        active_partners_mean=len(partners) / len(logs),
        calls_mean=float(np.mean([log.total_calls for log in logs])),
        messages_mean=float(np.mean([log.total_messages for log in logs])),
        span_mean_days=float(spans.mean()),
        span_sd_days=float(spans.std(ddof=1)) if len(logs) > 1 else 0.0,
        span_over_week=float(np.mean(spans > WEEK_DAYS)),
        span_over_month=float(np.mean(spans > MONTH_DAYS)),
        favorite_adopters=len(adopters),
        favorites_per_adopter=float(np.mean(adopters)) if adopters else 0.0,
        tagging_participants=tagging,
        tag_counts=dict(sorted(tags.items())),
        volume_span_correlation=volume_span,
    )
