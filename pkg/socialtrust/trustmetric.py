"""Quantile-threshold trust metric.

Calibrates the quantiles of every indicator over partners rated at the reference
(distrust) level, turns a quantile row into OR / AND threshold rules, grades contacts by
the highest quantile band they exceed, and evaluates rules against rated data.
"""

import itertools
import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .exceptions import (
    EmptyReferencePopulation,
    NoPartnerSatisfiesRule,
    NoRatedFavorites,
    UnknownProbability,
)
from .models import (
    LIKERT_LEVELS,
    FeatureVector,
    PartnerRecord,
    Rating,
    RatingKind,
    TrustLevel,
    Variable,
)

logger = logging.getLogger(__name__)

PROBABILITIES = (0.75, 0.90, 0.95, 0.99)
METRIC_VARIABLES = tuple(Variable)

RatedFeatures = tuple[FeatureVector, Rating]


class QuantileMode(Enum):
    """How partners of different participants are combined during calibration."""

    POOLED = "pooled"
    PER_PARTICIPANT = "per-participant"


def empirical_quantile(values: Sequence[float], probability: float) -> float:
    """Linear-interpolation quantile at position ``probability * (n - 1)`` of the sorted sample."""
    return float(np.quantile(np.asarray(values, dtype=np.float64), probability, method="linear"))


def _same_probability(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=1e-9)


@dataclass(frozen=True)
class QuantileTable:
    """Quantiles of every metric variable over the reference-level population.

    Attributes:
        probabilities: Quantile probabilities, strictly increasing
        values: Per variable, one quantile per probability
        reference_level: Rating level the quantiles were computed over
        rating_kind: Survey statement the reference level refers to
        population: Number of reference-level partners (0 for shipped tables)
    """

    probabilities: tuple[float, ...]
    values: Mapping[Variable, tuple[float, ...]]
    reference_level: int = 1
    rating_kind: RatingKind = RatingKind.TRUST_INFO
    population: int = 0

    def __post_init__(self) -> None:
        """Validate QuantileTable attributes."""
        if not self.probabilities:
            raise ValueError("QuantileTable needs at least one probability")
        if any(not 0.0 < p < 1.0 for p in self.probabilities):
            raise ValueError(f"Probabilities must lie in (0, 1): {self.probabilities}")
        if any(b <= a for a, b in itertools.pairwise(self.probabilities)):
            raise ValueError(f"Probabilities must be strictly increasing: {self.probabilities}")
        for variable in METRIC_VARIABLES:
            row = self.values.get(variable)
            if row is None:
                raise ValueError(f"QuantileTable is missing variable '{variable.value}'")
            if len(row) != len(self.probabilities):
                raise ValueError(
                    f"Variable '{variable.value}' has {len(row)} quantiles, "
                    f"expected {len(self.probabilities)}"
                )
            if any(b < a for a, b in itertools.pairwise(row)):
                raise ValueError(f"Quantiles of '{variable.value}' must be non-decreasing: {row}")

    def index_of(self, probability: float) -> int:
        """Column index of a probability.

        Raises:
            UnknownProbability: If the table has no such column
        """
        for index, candidate in enumerate(self.probabilities):
            if _same_probability(candidate, probability):
                return index
        raise UnknownProbability(probability, self.probabilities)

    def has_probability(self, probability: float) -> bool:
        """Check whether the table has a column for a probability."""
        return any(_same_probability(p, probability) for p in self.probabilities)

    def value(self, variable: Variable, probability: float) -> float:
        """Quantile of one variable at one probability."""
        return self.values[variable][self.index_of(probability)]

    def row(self, probability: float) -> dict[Variable, float]:
        """Quantiles of all variables at one probability."""
        index = self.index_of(probability)
        return {variable: self.values[variable][index] for variable in METRIC_VARIABLES}

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {
            "probabilities": list(self.probabilities),
            "reference_level": self.reference_level,
            "rating_kind": self.rating_kind.value,
            "population": self.population,
            "quantiles": {v.value: list(self.values[v]) for v in METRIC_VARIABLES},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QuantileTable":
        """Deserialize a mapping produced by ``to_dict``.

        Raises:
            ValueError: If the mapping is incomplete or inconsistent
        """
        try:
            return cls(
                probabilities=tuple(float(p) for p in data["probabilities"]),
                values={
                    Variable(name): tuple(float(v) for v in row)
                    for name, row in data["quantiles"].items()
                },
                reference_level=int(data.get("reference_level", 1)),
                rating_kind=RatingKind(data.get("rating_kind", RatingKind.TRUST_INFO.value)),
                population=int(data.get("population", 0)),
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise ValueError(f"Invalid quantile table: {e}") from e

    def format_table(self) -> str:
        """Render the table in the published layout (one row per variable)."""
        width = max(len(v.label) for v in METRIC_VARIABLES)
        header = "Variable name".ljust(width) + "".join(
            f"{f'{p * 100:g}%':>10}" for p in self.probabilities
        )
        lines = [
            f"Quantiles of selected variables for rating level {self.reference_level}",
            header,
            "-" * len(header),
        ]
        for variable in METRIC_VARIABLES:
            cells = "".join(f"{value:>10.1f}" for value in self.values[variable])
            lines.append(variable.label.ljust(width) + cells)
        return "\n".join(lines)


def reference_table() -> QuantileTable:
    """The published level-1 quantile table of the survey corpus."""
    return QuantileTable(
        probabilities=PROBABILITIES,
        values={
            Variable.NUM_CALLS: (2.0, 7.0, 13.0, 42.0),
            Variable.NUM_MSGS: (2.5, 14.0, 35.0, 84.0),
            Variable.DUR_CALLS: (89.0, 460.0, 711.0, 4759.0),
            Variable.LEN_MSGS: (158.0, 1003.0, 2105.0, 5580.0),
            Variable.REL_CALLS: (0.6, 2.6, 5.5, 14.6),
            Variable.REL_MSGS: (0.6, 2.3, 5.9, 17.4),
        },
    )


def _level_value(level: TrustLevel | int) -> int:
    return TrustLevel(int(level)).level


def _reference_vectors(
    dataset: Iterable[RatedFeatures], level: int, rating_kind: RatingKind
) -> list[FeatureVector]:
    return [fv for fv, rating in dataset if rating.get(rating_kind) == level]


def compute_quantiles(
    dataset: Iterable[RatedFeatures],
    reference_level: TrustLevel | int = 1,
    rating_kind: RatingKind = RatingKind.TRUST_INFO,
    probabilities: Sequence[float] = PROBABILITIES,
) -> QuantileTable:
    """Calibrate the quantile table over partners rated at the reference level.

    Args:
        dataset: (FeatureVector, Rating) pairs of all partners
        reference_level: Rating level whose population bounds distrust
        rating_kind: Survey statement the level refers to
        probabilities: Quantile probabilities to compute

    Returns:
        QuantileTable over the reference-level subpopulation

    Raises:
        EmptyReferencePopulation: If no partner carries the reference level
    """
    level = _level_value(reference_level)
    vectors = _reference_vectors(dataset, level, rating_kind)
    if not vectors:
        raise EmptyReferencePopulation(
            f"No partner rated {level} on {rating_kind.value}; cannot calibrate quantiles"
        )
    values: dict[Variable, tuple[float, ...]] = {}
    for variable in METRIC_VARIABLES:
        sample = np.array([fv.value(variable) for fv in vectors], dtype=np.float64)
        quantiles = np.quantile(sample, list(probabilities), method="linear")
        values[variable] = tuple(float(q) for q in quantiles)
    logger.debug(f"Calibrated quantiles over {len(vectors)} level-{level} partners")
    return QuantileTable(
        probabilities=tuple(probabilities),
        values=values,
        reference_level=level,
        rating_kind=rating_kind,
        population=len(vectors),
    )


def compute_quantiles_per_participant(
    groups: Mapping[str, Sequence[RatedFeatures]],
    reference_level: TrustLevel | int = 1,
    rating_kind: RatingKind = RatingKind.TRUST_INFO,
    probabilities: Sequence[float] = PROBABILITIES,
) -> QuantileTable:
    """Calibrate quantiles per participant and average them across participants.

    Participants without a reference-level partner do not contribute.

    Raises:
        EmptyReferencePopulation: If no participant has a reference-level partner
    """
    level = _level_value(reference_level)
    tables = [
        compute_quantiles(rows, level, rating_kind, probabilities)
        for rows in groups.values()
        if _reference_vectors(rows, level, rating_kind)
    ]
    if not tables:
        raise EmptyReferencePopulation(
            f"No participant has a partner rated {level} on {rating_kind.value}"
        )
    values = {
        variable: tuple(
            float(q) for q in np.mean([table.values[variable] for table in tables], axis=0)
        )
        for variable in METRIC_VARIABLES
    }
    return QuantileTable(
        probabilities=tuple(probabilities),
        values=values,
        reference_level=level,
        rating_kind=rating_kind,
        population=sum(table.population for table in tables),
    )


def calibrate(
    groups: Mapping[str, Sequence[RatedFeatures]],
    mode: QuantileMode = QuantileMode.POOLED,
    reference_level: TrustLevel | int = 1,
    rating_kind: RatingKind = RatingKind.TRUST_INFO,
) -> QuantileTable:
    """Calibrate a quantile table from per-participant datasets in the given mode."""
    if mode is QuantileMode.PER_PARTICIPANT:
        return compute_quantiles_per_participant(groups, reference_level, rating_kind)
    pooled = [row for rows in groups.values() for row in rows]
    return compute_quantiles(pooled, reference_level, rating_kind)


@dataclass(frozen=True)
class Trigger:
    """A threshold a feature exceeded.

    Attributes:
        variable: Indicator that was compared
        threshold: Rule threshold
        observed: Indicator value of the partner
    """

    variable: Variable
    threshold: float
    observed: float


@dataclass(frozen=True)
class OrAny:
    """Trusted when any listed variable exceeds its threshold."""

    variables: tuple[Variable, ...] = METRIC_VARIABLES

    def triggers(
        self, fv: FeatureVector, thresholds: Mapping[Variable, float]
    ) -> tuple[Trigger, ...]:
        """Return every exceeded threshold."""
        found = (Trigger(v, thresholds[v], fv.value(v)) for v in self.variables)
        return tuple(t for t in found if t.observed > t.threshold)

    def describe(self) -> str:
        """Short textual form, as accepted by ``parse_combinator``."""
        return "or"


@dataclass(frozen=True)
class AndPair:
    """Trusted when both variables exceed their thresholds."""

    first: Variable
    second: Variable

    def __post_init__(self) -> None:
        """Validate AndPair attributes."""
        if self.first is self.second:
            raise ValueError(f"AndPair needs two different variables, got {self.first.value} twice")

    @property
    def variables(self) -> tuple[Variable, ...]:
        """The two combined variables."""
        return (self.first, self.second)

    def triggers(
        self, fv: FeatureVector, thresholds: Mapping[Variable, float]
    ) -> tuple[Trigger, ...]:
        """Return both triggers when both thresholds are exceeded, else nothing."""
        found = tuple(Trigger(v, thresholds[v], fv.value(v)) for v in self.variables)
        return found if all(t.observed > t.threshold for t in found) else ()

    def describe(self) -> str:
        """Short textual form, as accepted by ``parse_combinator``."""
        return f"and:{self.first.value},{self.second.value}"


Combinator = OrAny | AndPair


def parse_combinator(text: str) -> Combinator:
    """Parse ``or`` or ``and:<variable>,<variable>``.

    Raises:
        ValueError: If the text names no known combinator or variable
    """
    text = text.strip().lower()
    if text == "or":
        return OrAny()
    if text.startswith("and:"):
        names = [name.strip() for name in text[4:].split(",")]
        if len(names) != 2:
            raise ValueError(f"AND combinator needs exactly two variables: {text!r}")
        return AndPair(Variable(names[0]), Variable(names[1]))
    raise ValueError(f"Unknown combinator {text!r}; use 'or' or 'and:<var>,<var>'")


@dataclass(frozen=True)
class ThresholdRule:
    """Threshold rule built from one quantile row.

    Attributes:
        combinator: How exceeded thresholds are joined
        quantile_prob: Probability of the quantile row the thresholds come from
        thresholds: Threshold per variable (observed > threshold signals trust)
        favorites_filter: Only favorites can satisfy the rule
    """

    combinator: Combinator
    quantile_prob: float
    thresholds: Mapping[Variable, float]
    favorites_filter: bool = False

    def __post_init__(self) -> None:
        """Validate ThresholdRule attributes."""
        missing = [v.value for v in self.combinator.variables if v not in self.thresholds]
        if missing:
            raise ValueError(f"Rule has no threshold for: {', '.join(missing)}")

    def triggers(self, fv: FeatureVector) -> tuple[Trigger, ...]:
        """Thresholds the feature vector exceeds under this rule."""
        if self.favorites_filter and not fv.is_favorite:
            return ()
        return self.combinator.triggers(fv, self.thresholds)

    def matches(self, fv: FeatureVector) -> bool:
        """Check whether a feature vector satisfies the rule."""
        return bool(self.triggers(fv))

    def describe(self) -> str:
        """Human-readable condition, e.g. ``num_calls > 13 AND len_msgs > 2105``."""
        joiner = " AND " if isinstance(self.combinator, AndPair) else " OR "
        text = joiner.join(
            f"{v.value} > {self.thresholds[v]:g}" for v in self.combinator.variables
        )
        return f"{text} (favorites only)" if self.favorites_filter else text


def build_rule(
    table: QuantileTable,
    prob: float,
    combinator: Combinator,
    favorites_filter: bool = False,
) -> ThresholdRule:
    """Build a threshold rule from one quantile row.

    Raises:
        UnknownProbability: If the table has no column for ``prob``
    """
    return ThresholdRule(
        combinator=combinator,
        quantile_prob=table.probabilities[table.index_of(prob)],
        thresholds=table.row(prob),
        favorites_filter=favorites_filter,
    )


@dataclass(frozen=True)
class GradingBands:
    """Mapping from the quantile band a contact exceeds to its trust grade.

    Attributes:
        grades: Quantile probability -> grade (2-5), non-decreasing in probability
    """

    grades: Mapping[float, int] = field(
        default_factory=lambda: {0.75: 2, 0.90: 3, 0.95: 4, 0.99: 5}
    )

    def __post_init__(self) -> None:
        """Validate GradingBands attributes."""
        if not self.grades:
            raise ValueError("GradingBands needs at least one band")
        ordered = sorted(self.grades.items())
        for _, grade in ordered:
            if grade not in LIKERT_LEVELS[1:]:
                raise ValueError(f"Band grades must lie in 2-5, got {grade}")
        if any(b[1] < a[1] for a, b in itertools.pairwise(ordered)):
            raise ValueError("Band grades must not decrease with the quantile probability")

    def descending(self) -> list[tuple[float, int]]:
        """Bands from the highest probability down."""
        return sorted(self.grades.items(), reverse=True)


@dataclass(frozen=True)
class TrustPrediction:
    """Graded trust prediction for one contact.

    Attributes:
        predicted_trusted: Whether any band fired
        grade: Trust grade; 1 when untrusted
        triggered: Thresholds exceeded in the band that fired
        confidence_band: Quantile probability of the band that fired
    """

    predicted_trusted: bool
    grade: TrustLevel
    triggered: tuple[Trigger, ...] = ()
    confidence_band: float | None = None

    def __post_init__(self) -> None:
        """Validate TrustPrediction attributes."""
        if self.predicted_trusted != bool(self.triggered):
            raise ValueError("predicted_trusted must hold exactly when triggers are present")


class TrustPredictor:
    """Grades feature vectors against one quantile table.

    Rules for every band are built once, so the predictor can be reused across many
    contacts and shared between threads.
    """

    def __init__(
        self,
        table: QuantileTable,
        combinator: Combinator | None = None,
        favorites_filter: bool = False,
        bands: GradingBands | None = None,
    ) -> None:
        """Initialize TrustPredictor.

        Args:
            table: Calibrated quantile table
            combinator: Rule combinator (OR over all variables by default)
            favorites_filter: Only favorites can be predicted trusted
            bands: Band -> grade mapping (0.75/0.90/0.95/0.99 -> 2/3/4/5 by default)

        Raises:
            UnknownProbability: If a band probability is not in the table
        """
        self.table = table
        self.combinator = combinator or OrAny()
        self.bands = bands or GradingBands()
        self.rules = [
            (build_rule(table, prob, self.combinator, favorites_filter), grade)
            for prob, grade in self.bands.descending()
        ]

    def predict(self, fv: FeatureVector) -> TrustPrediction:
        """Grade one contact by the highest band whose rule it satisfies."""
        for rule, grade in self.rules:
            triggered = rule.triggers(fv)
            if triggered:
                return TrustPrediction(
                    predicted_trusted=True,
                    grade=TrustLevel(grade),
                    triggered=triggered,
                    confidence_band=rule.quantile_prob,
                )
        return TrustPrediction(predicted_trusted=False, grade=TrustLevel(1))


def predict(
    fv: FeatureVector,
    table: QuantileTable,
    combinator: Combinator | None = None,
    favorites_filter: bool = False,
    bands: GradingBands | None = None,
) -> TrustPrediction:
    """Grade one contact against a quantile table; see ``TrustPredictor``."""
    return TrustPredictor(table, combinator, favorites_filter, bands).predict(fv)


@dataclass(frozen=True)
class DistributionRow:
    """Share of one rating level.

    Attributes:
        level: Rating level
        count: Partners at this level
        percent: Percent of all counted partners
        cumulative: Percent at this level or above
    """

    level: int
    count: int
    percent: float
    cumulative: float


@dataclass(frozen=True)
class RatingDistribution:
    """Percent and cumulative percent per rating level, from level 5 down to 1."""

    rows: tuple[DistributionRow, ...]

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> "RatingDistribution":
        """Build the distribution from a level -> count mapping."""
        total = sum(counts.get(level, 0) for level in LIKERT_LEVELS)
        if total == 0:
            raise ValueError("Cannot build a rating distribution from zero partners")
        rows: list[DistributionRow] = []
        running = 0
        for level in sorted(LIKERT_LEVELS, reverse=True):
            count = counts.get(level, 0)
            running += count
            rows.append(
                DistributionRow(
                    level=level,
                    count=count,
                    percent=100.0 * count / total,
                    cumulative=100.0 * running / total,
                )
            )
        return cls(rows=tuple(rows))

    @property
    def total(self) -> int:
        """Number of counted partners."""
        return sum(row.count for row in self.rows)

    def _row(self, level: int) -> DistributionRow:
        return next(row for row in self.rows if row.level == level)

    def percent(self, level: int) -> float:
        """Percent of partners at exactly this level."""
        return self._row(level).percent

    def cumulative(self, level: int) -> float:
        """Percent of partners at this level or above."""
        return self._row(level).cumulative

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {
            "total": self.total,
            "levels": [
                {
                    "level": r.level,
                    "count": r.count,
                    "percent": round(r.percent, 2),
                    "cumulative": round(r.cumulative, 2),
                }
                for r in self.rows
            ],
        }

    def format_table(self, title: str = "") -> str:
        """Render the rating level / percent / cumulative percent layout."""
        lines = [title] if title else []
        lines.append(f"{'Rating Level':>12} | {'Percent':>8} | {'Cum. Percent':>12}")
        lines.append("-" * 38)
        for row in self.rows:
            lines.append(f"{row.level:>12} | {row.percent:>8.2f} | {row.cumulative:>12.2f}")
        return "\n".join(lines)


def evaluate_rule(
    dataset: Iterable[RatedFeatures],
    rule: ThresholdRule,
    rating_kind: RatingKind = RatingKind.TRUST_INFO,
) -> RatingDistribution:
    """Rating distribution of the partners that satisfy a rule.

    Partners without an answer for ``rating_kind`` are skipped.

    Raises:
        NoPartnerSatisfiesRule: If no rated partner satisfies the rule
    """
    counts: Counter[int] = Counter()
    for fv, rating in dataset:
        level = rating.get(rating_kind)
        if level is None:
            logger.debug("Skipping unrated partner during rule evaluation")
            continue
        if rule.matches(fv):
            counts[level] += 1
    if not counts:
        raise NoPartnerSatisfiesRule(f"No rated partner satisfies {rule.describe()}")
    return RatingDistribution.from_counts(counts)


def favorites_table(
    partners: Iterable[PartnerRecord],
    rating_kind: RatingKind = RatingKind.TRUST_INFO,
) -> RatingDistribution:
    """Rating distribution over favorite partners.

    Raises:
        NoRatedFavorites: If no favorite carries an answer for ``rating_kind``
    """
    counts = Counter(
        level
        for partner in partners
        if partner.is_favorite and (level := partner.rating.get(rating_kind)) is not None
    )
    if not counts:
        raise NoRatedFavorites("No favorite partner carries a rating")
    return RatingDistribution.from_counts(counts)


@dataclass(frozen=True)
class PairRuleResult:
    """Evaluation of one AND-pair rule.

    Attributes:
        rule: The evaluated rule
        distribution: Rating distribution of satisfying partners
        share_at_least: Percent of satisfying partners rated at or above the cut level
    """

    rule: ThresholdRule
    distribution: RatingDistribution
    share_at_least: float


def rank_pair_rules(
    dataset: Sequence[RatedFeatures],
    table: QuantileTable,
    prob: float = 0.95,
    favorites_filter: bool = False,
    min_level: int = 3,
    rating_kind: RatingKind = RatingKind.TRUST_INFO,
) -> list[PairRuleResult]:
    """Evaluate every AND pair of metric variables and rank by trusted share.

    Pairs that no rated partner satisfies are left out. Ranking is by the share rated
    at least ``min_level``, then by the number of satisfying partners.
    """
    results: list[PairRuleResult] = []
    for first, second in itertools.combinations(METRIC_VARIABLES, 2):
        rule = build_rule(table, prob, AndPair(first, second), favorites_filter)
        try:
            distribution = evaluate_rule(dataset, rule, rating_kind)
        except NoPartnerSatisfiesRule:
            continue
        results.append(
            PairRuleResult(
                rule=rule,
                distribution=distribution,
                share_at_least=distribution.cumulative(min_level),
            )
        )
    return sorted(results, key=lambda r: (-r.share_at_least, -r.distribution.total))
