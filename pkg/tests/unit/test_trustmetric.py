"""Unit tests for the quantile-threshold trust metric."""

import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from socialtrust.exceptions import (
    EmptyReferencePopulation,
    NoPartnerSatisfiesRule,
    NoRatedFavorites,
    UnknownProbability,
)
from socialtrust.models import FeatureVector, PartnerRecord, Rating, RatingKind, Variable
from socialtrust.trustmetric import (
    PROBABILITIES,
    AndPair,
    GradingBands,
    OrAny,
    QuantileMode,
    QuantileTable,
    RatingDistribution,
    TrustPredictor,
    build_rule,
    calibrate,
    compute_quantiles,
    compute_quantiles_per_participant,
    empirical_quantile,
    evaluate_rule,
    favorites_table,
    parse_combinator,
    predict,
    rank_pair_rules,
    reference_table,
)
from tests.helpers import rated


def sort_interpolate(values, p):
    """Brute-force quantile: sort, then interpolate at p * (n - 1)."""
    ordered = sorted(values)
    position = p * (len(ordered) - 1)
    low = math.floor(position)
    high = min(low + 1, len(ordered) - 1)
    return ordered[low] + (position - low) * (ordered[high] - ordered[low])


def _uniform_table(value: float) -> QuantileTable:
    return QuantileTable(
        probabilities=PROBABILITIES,
        values={v: (value, value + 1, value + 2, value + 3) for v in Variable},
    )


class TestEmpiricalQuantiles:
    """Tests for quantile calibration."""

    def test_oracle_on_random_multisets(self):
        """Test compute_quantiles against sort+interpolate on 1000 random multisets."""
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            size = int(rng.integers(1, 501))
            values = rng.integers(0, 50, size).astype(float) * rng.choice([1.0, 0.37])
            dataset = [rated(trust_info=1, num_calls=v) for v in values]
            table = compute_quantiles(dataset)
            for index, p in enumerate(PROBABILITIES):
                expected = sort_interpolate(list(values), p)
                assert abs(table.values[Variable.NUM_CALLS][index] - expected) <= 1e-9

    def test_single_value(self):
        """Test that a single sample is every quantile."""
        assert empirical_quantile([7.0], 0.99) == 7.0

    def test_interpolation(self):
        """Test linear interpolation between order statistics."""
        assert empirical_quantile([0, 10, 20, 30, 40], 0.75) == 30.0
        assert empirical_quantile([0.0, 10.0], 0.95) == pytest.approx(9.5)

    def test_only_reference_level_counts(self):
        """Test that partners at other levels are ignored."""
        dataset = [rated(trust_info=1, num_calls=1), rated(trust_info=2, num_calls=1000)]
        dataset += [rated(trust_info=None, num_calls=5000)]
        table = compute_quantiles(dataset)
        assert table.population == 1
        assert table.value(Variable.NUM_CALLS, 0.99) == 1.0

    def test_other_rating_kind(self):
        """Test calibrating on the closeness statement."""
        dataset = [rated(closeness=1, num_msgs=4), rated(trust_info=1, num_msgs=400)]
        table = compute_quantiles(dataset, rating_kind=RatingKind.CLOSENESS)
        assert table.value(Variable.NUM_MSGS, 0.75) == 4.0
        assert table.rating_kind is RatingKind.CLOSENESS

    def test_empty_reference_population(self):
        """Test that calibration needs level-1 partners."""
        with pytest.raises(EmptyReferencePopulation):
            compute_quantiles([rated(trust_info=3, num_calls=2)])

    def test_per_participant_mean(self):
        """Test per-participant calibration averages participant quantiles."""
        groups = {
            "a": [rated(trust_info=1, num_calls=10)],
            "b": [rated(trust_info=1, num_calls=20), rated(trust_info=1, num_calls=20)],
            "c": [rated(trust_info=4, num_calls=999)],
        }
        table = compute_quantiles_per_participant(groups)
        assert table.value(Variable.NUM_CALLS, 0.95) == 15.0
        assert table.population == 3

    def test_calibrate_modes(self):
        """Test that pooled and per-participant modes differ as expected."""
        groups = {
            "a": [rated(trust_info=1, num_calls=10)],
            "b": [rated(trust_info=1, num_calls=20), rated(trust_info=1, num_calls=20)],
        }
        pooled = calibrate(groups, QuantileMode.POOLED)
        per_participant = calibrate(groups, QuantileMode.PER_PARTICIPANT)
        assert pooled.value(Variable.NUM_CALLS, 0.75) == 20.0
        assert per_participant.value(Variable.NUM_CALLS, 0.75) == 15.0

    def test_per_participant_empty(self):
        """Test that no reference-level partner anywhere is an error."""
        with pytest.raises(EmptyReferencePopulation):
            compute_quantiles_per_participant({"a": [rated(trust_info=5)]})


class TestQuantileTable:
    """Tests for QuantileTable."""

    def test_reference_table_thresholds(self):
        """Test the rule built from the published table at the 0.95 band."""
        rule = build_rule(reference_table(), 0.95, OrAny())
        assert dict(rule.thresholds) == {
            Variable.NUM_CALLS: 13.0,
            Variable.NUM_MSGS: 35.0,
            Variable.DUR_CALLS: 711.0,
            Variable.LEN_MSGS: 2105.0,
            Variable.REL_CALLS: 5.5,
            Variable.REL_MSGS: 5.9,
        }

    def test_unknown_probability(self):
        """Test that bands outside the table are rejected."""
        with pytest.raises(UnknownProbability):
            build_rule(reference_table(), 0.5, OrAny())
        assert not reference_table().has_probability(0.5)

    def test_dict_round_trip(self):
        """Test the JSON codec."""
        table = reference_table()
        assert QuantileTable.from_dict(table.to_dict()) == table

    def test_from_dict_incomplete(self):
        """Test that a table without quantiles is rejected."""
        with pytest.raises(ValueError):
            QuantileTable.from_dict({"probabilities": [0.75]})

    def test_validation(self):
        """Test structural validation."""
        with pytest.raises(ValueError, match="increasing"):
            QuantileTable((0.9, 0.75), {v: (1.0, 2.0) for v in Variable})
        with pytest.raises(ValueError, match="missing variable"):
            QuantileTable((0.75,), {Variable.NUM_CALLS: (1.0,)})
        with pytest.raises(ValueError, match="non-decreasing"):
            QuantileTable((0.75, 0.9), {v: (2.0, 1.0) for v in Variable})

    def test_format_table(self):
        """Test the published layout."""
        text = reference_table().format_table()
        assert "rating level 1" in text
        assert "95%" in text
        assert "Message length" in text
        assert "2105.0" in text


class TestRules:
    """Tests for combinators and threshold rules."""

    def test_strict_comparison(self):
        """Test that values equal to the threshold do not trigger."""
        rule = build_rule(reference_table(), 0.95, OrAny())
        assert not rule.matches(FeatureVector(num_calls=13))
        assert rule.matches(FeatureVector(num_calls=14))

    def test_or_reports_every_trigger(self):
        """Test that OR returns all exceeded thresholds."""
        rule = build_rule(reference_table(), 0.95, OrAny())
        triggers = rule.triggers(FeatureVector(num_calls=20, rel_msgs=6.0))
        assert {t.variable for t in triggers} == {Variable.NUM_CALLS, Variable.REL_MSGS}
        assert triggers[0].threshold == 13.0
        assert triggers[0].observed == 20.0

    def test_and_needs_both(self):
        """Test that AND fires only when both thresholds are exceeded."""
        rule = build_rule(reference_table(), 0.95, AndPair(Variable.NUM_CALLS, Variable.LEN_MSGS))
        assert not rule.matches(FeatureVector(num_calls=20, len_msgs=100))
        assert rule.matches(FeatureVector(num_calls=20, len_msgs=3000))
        assert rule.describe() == "num_calls > 13 AND len_msgs > 2105"

    def test_and_pair_distinct(self):
        """Test that an AND pair needs two different variables."""
        with pytest.raises(ValueError):
            AndPair(Variable.NUM_CALLS, Variable.NUM_CALLS)

    def test_parse_combinator(self):
        """Test the textual combinator forms."""
        assert parse_combinator("or") == OrAny()
        assert parse_combinator("AND:num_calls, len_msgs") == AndPair(
            Variable.NUM_CALLS, Variable.LEN_MSGS
        )
        for text in ("xor", "and:num_calls", "and:num_calls,bogus"):
            with pytest.raises(ValueError):
                parse_combinator(text)

    def test_favorites_filter(self):
        """Test that the favorites filter blocks non-favorites."""
        rule = build_rule(reference_table(), 0.95, OrAny(), favorites_filter=True)
        assert not rule.matches(FeatureVector(num_calls=100))
        assert rule.matches(FeatureVector(num_calls=100, is_favorite=True))
        assert rule.describe().endswith("(favorites only)")


class TestPredict:
    """Tests for graded trust prediction."""

    def test_below_every_band(self):
        """Test that an inactive contact is untrusted at level 1."""
        prediction = predict(FeatureVector(), reference_table())
        assert prediction.predicted_trusted is False
        assert prediction.grade.level == 1
        assert prediction.triggered == ()
        assert prediction.confidence_band is None

    @pytest.mark.parametrize(
        ("num_calls", "grade", "band"),
        [(3, 2, 0.75), (8, 3, 0.90), (14, 4, 0.95), (43, 5, 0.99)],
    )
    def test_grades_by_highest_band(self, num_calls, grade, band):
        """Test that the highest exceeded band sets the grade."""
        prediction = predict(FeatureVector(num_calls=num_calls), reference_table())
        assert prediction.predicted_trusted is True
        assert prediction.grade.level == grade
        assert prediction.confidence_band == band
        assert prediction.triggered[0].variable is Variable.NUM_CALLS

    def test_custom_bands(self):
        """Test a configured grading."""
        bands = GradingBands({0.95: 5})
        assert predict(FeatureVector(num_calls=14), reference_table(), bands=bands).grade.level == 5
        assert predict(FeatureVector(num_calls=8), reference_table(), bands=bands).grade.level == 1

    def test_bands_validation(self):
        """Test grading band validation."""
        with pytest.raises(ValueError):
            GradingBands({0.75: 4, 0.99: 3})
        with pytest.raises(ValueError):
            GradingBands({0.75: 1})

    def test_favorites_property(self):
        """Test that every trusted contact is a favorite under the favorites filter."""
        rng = np.random.default_rng(99)
        predictor = TrustPredictor(
            reference_table(),
            AndPair(Variable.NUM_CALLS, Variable.LEN_MSGS),
            favorites_filter=True,
        )
        for _ in range(100):
            vectors = [
                FeatureVector(
                    num_calls=int(rng.integers(0, 80)),
                    len_msgs=int(rng.integers(0, 8000)),
                    is_favorite=bool(rng.random() < 0.3),
                )
                for _ in range(int(rng.integers(1, 60)))
            ]
            trusted = [fv for fv in vectors if predictor.predict(fv).predicted_trusted]
            assert all(fv.is_favorite for fv in trusted)


class TestGradeProperties:
    """Seeded property tests over random feature vectors."""

    @staticmethod
    def random_vector(rng):
        return FeatureVector(
            num_calls=int(rng.integers(0, 60)),
            num_msgs=int(rng.integers(0, 600)),
            dur_calls=int(rng.integers(0, 6000)),
            len_msgs=int(rng.integers(0, 12000)),
            rel_calls=float(rng.uniform(0, 20)),
            rel_msgs=float(rng.uniform(0, 20)),
            is_favorite=bool(rng.random() < 0.3),
        )

    @pytest.mark.parametrize(
        "combinator", [OrAny(), AndPair(Variable.NUM_CALLS, Variable.LEN_MSGS)]
    )
    def test_raising_a_feature_never_lowers_the_grade(self, combinator):
        """Test that the grade is monotone in every variable."""
        rng = np.random.default_rng(17)
        predictor = TrustPredictor(reference_table(), combinator)
        for _ in range(300):
            fv = self.random_vector(rng)
            grade = predictor.predict(fv).grade.level
            for variable in Variable:
                step = fv.value(variable) * float(rng.uniform(0.1, 3.0)) + 1
                current = getattr(fv, variable.value)
                raised = replace(fv, **{variable.value: type(current)(current + step)})
                assert predictor.predict(raised).grade.level >= grade, (fv, variable)

    def test_higher_band_implies_lower_bands(self):
        """Test that satisfying the 0.99 rule implies the 0.95, 0.90 and 0.75 rules."""
        rng = np.random.default_rng(23)
        table = reference_table()
        rules = [build_rule(table, prob, OrAny()) for prob in (0.99, 0.95, 0.90, 0.75)]
        for _ in range(500):
            fv = self.random_vector(rng)
            verdicts = [rule.matches(fv) for rule in rules]
            for higher, lower in itertools.pairwise(verdicts):
                assert lower or not higher, fv

    def test_band_reported_matches_grade(self):
        """Test that the reported band is the one mapped to the grade."""
        rng = np.random.default_rng(29)
        bands = dict(GradingBands().descending())
        predictor = TrustPredictor(reference_table())
        for _ in range(200):
            prediction = predictor.predict(self.random_vector(rng))
            if prediction.predicted_trusted:
                assert bands[prediction.confidence_band] == prediction.grade.level


class TestEvaluation:
    """Tests for rating distributions of rule-satisfying partners."""

    def test_distribution_replay(self):
        """Test the published percent / cumulative layout on a derived dataset."""
        counts = {5: 4233, 4: 1933, 3: 1890, 2: 886, 1: 1058}
        dataset = []
        for level, count in counts.items():
            dataset += [rated(trust_info=level, num_calls=50)] * count
        dataset += [rated(trust_info=1, num_calls=0)] * 500
        distribution = evaluate_rule(dataset, build_rule(reference_table(), 0.95, OrAny()))
        assert distribution.total == 10000
        for level, percent in zip((5, 4, 3, 2, 1), (42.33, 19.33, 18.90, 8.86, 10.58)):
            assert distribution.percent(level) == pytest.approx(percent, abs=0.01)
        assert distribution.cumulative(3) == pytest.approx(80.56, abs=0.01)
        assert distribution.cumulative(1) == pytest.approx(100.0)

    def test_unrated_partners_skipped(self):
        """Test that partners without the statement are not counted."""
        dataset = [rated(trust_info=None, num_calls=99), rated(trust_info=4, num_calls=99)]
        distribution = evaluate_rule(dataset, build_rule(reference_table(), 0.95, OrAny()))
        assert distribution.total == 1
        assert distribution.percent(4) == 100.0

    def test_nothing_satisfies(self):
        """Test the error when no rated partner satisfies the rule."""
        with pytest.raises(NoPartnerSatisfiesRule):
            evaluate_rule([rated(trust_info=2)], build_rule(reference_table(), 0.95, OrAny()))

    def test_format_and_dict(self):
        """Test distribution rendering."""
        distribution = RatingDistribution.from_counts({5: 1, 1: 3})
        assert "Cum. Percent" in distribution.format_table("T")
        document = distribution.to_dict()
        assert document["total"] == 4
        assert document["levels"][0] == {
            "level": 5, "count": 1, "percent": 25.0, "cumulative": 25.0
        }

    def test_favorites_table(self):
        """Test the distribution over favorites."""
        partners = [
            PartnerRecord("a", rating=Rating(trust_info=5), is_favorite=True),
            PartnerRecord("b", rating=Rating(trust_info=4), is_favorite=True),
            PartnerRecord("c", rating=Rating(trust_info=1), is_favorite=False),
            PartnerRecord("d", is_favorite=True),
        ]
        distribution = favorites_table(partners)
        assert distribution.total == 2
        assert distribution.cumulative(4) == 100.0

    def test_no_rated_favorites(self):
        """Test the error when no favorite is rated."""
        with pytest.raises(NoRatedFavorites):
            favorites_table([PartnerRecord("a", is_favorite=True)])

    def test_rank_pair_rules(self):
        """Test that AND pairs are ranked by the share rated 3 or higher."""
        dataset = [
            rated(trust_info=5, num_calls=20, len_msgs=3000),
            rated(trust_info=4, num_calls=20, len_msgs=3000),
            rated(trust_info=1, num_msgs=50, dur_calls=800),
            rated(trust_info=2, num_msgs=50, dur_calls=800),
        ]
        ranked = rank_pair_rules(dataset, reference_table())
        assert len(ranked) == 2
        best, worst = ranked
        assert best.rule.combinator == AndPair(Variable.NUM_CALLS, Variable.LEN_MSGS)
        assert best.share_at_least == 100.0
        assert worst.share_at_least == 0.0
