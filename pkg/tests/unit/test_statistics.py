"""Unit tests for rating statistics."""

import numpy as np
import pytest

from socialtrust.exceptions import DegenerateInput
from socialtrust.ingest import InteractionClass, class_from_position
from socialtrust.models import Rating, RatingKind
from socialtrust.population import SimConfig, generate_population
from socialtrust.statistics import (
    CorrelationMethod,
    class_distribution,
    correlation_matrix,
    correlation_significance,
    critical_t,
    format_correlations,
    histogram_rows,
    level_means,
    pearson,
    spearman,
    summarize_corpus,
)
from tests.helpers import make_corpus, make_log, make_partner, rated


class TestPearson:
    """Tests for the Pearson coefficient."""

    def test_identity_and_negation(self):
        """Test perfect positive and negative correlation."""
        x = [1.0, 2.0, 4.0, 8.0, 9.5]
        assert pearson(x, x) == pytest.approx(1.0, abs=1e-12)
        assert pearson(x, [-v for v in x]) == pytest.approx(-1.0, abs=1e-12)

    def test_affine_invariance(self):
        """Test invariance under positive affine maps."""
        rng = np.random.default_rng(1)
        x = rng.normal(size=40)
        y = x + rng.normal(size=40)
        r = pearson(x.tolist(), y.tolist())
        assert pearson((3 * x + 7).tolist(), (0.5 * y - 2).tolist()) == pytest.approx(r, abs=1e-12)

    def test_direct_formula_oracle(self):
        """Test agreement with the textbook formula on 100 random vectors."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(3, 200))
            x = rng.normal(size=n)
            y = 0.3 * x + rng.normal(size=n)
            mx, my = x.mean(), y.mean()
            expected = np.sum((x - mx) * (y - my)) / np.sqrt(
                np.sum((x - mx) ** 2) * np.sum((y - my) ** 2)
            )
            assert abs(pearson(x.tolist(), y.tolist()) - expected) <= 1e-12

    @pytest.mark.parametrize(
        ("x", "y"),
        [([1, 2], [1, 2]), ([1, 2, 3], [1, 2]), ([1, 1, 1], [1, 2, 3]), ([1, 2, 3], [4, 4, 4])],
    )
    def test_degenerate(self, x, y):
        """Test short, mismatched and constant inputs."""
        with pytest.raises(DegenerateInput):
            pearson(x, y)


class TestSpearman:
    """Tests for the Spearman coefficient."""

    def test_monotone_is_one(self):
        """Test that any increasing transform correlates perfectly."""
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        assert spearman(x, [v**3 for v in x]) == pytest.approx(1.0)

    def test_ties_use_average_ranks(self):
        """Test a tied sample against Pearson over average ranks."""
        assert spearman([1, 2, 2, 3], [1, 3, 2, 4]) == pytest.approx(
            pearson([1, 2.5, 2.5, 4], [1, 3, 2, 4])
        )


class TestSignificance:
    """Tests for the t test of correlation coefficients."""

    def test_large_sample_is_significant(self):
        """Test r=0.7976 with 3331 partners."""
        result = correlation_significance(0.7976, 3331)
        assert result.significant is True
        assert result.t_statistic == pytest.approx(
            0.7976 * np.sqrt(3329 / (1 - 0.7976**2)), rel=1e-12
        )

    def test_small_sample_is_not(self):
        """Test a weak coefficient on few observations."""
        assert correlation_significance(0.3, 10).significant is False

    def test_critical_values(self):
        """Test two-sided 99% critical values of Student's t."""
        assert critical_t(10) == pytest.approx(3.169, abs=1e-3)
        assert critical_t(1000) == pytest.approx(2.581, abs=1e-3)

    @pytest.mark.parametrize(("r", "n"), [(0.5, 2), (1.0, 50), (-1.0, 50)])
    def test_undefined(self, r, n):
        """Test inputs without a defined t statistic."""
        with pytest.raises(DegenerateInput):
            correlation_significance(r, n)


class TestCorrelationMatrix:
    """Tests for the rating correlation matrix."""

    def test_three_pairs(self):
        """Test that every statement pair is reported."""
        rng = np.random.default_rng(3)
        ratings = []
        for _ in range(60):
            base = int(rng.integers(1, 6))
            ratings.append(
                Rating(
                    closeness=base,
                    trust_info=int(np.clip(base + rng.integers(-1, 2), 1, 5)),
                    trust_best=int(rng.integers(1, 6)),
                )
            )
        entries = correlation_matrix(ratings, n_participants=12)
        assert [(e.first, e.second) for e in entries] == [
            (RatingKind.CLOSENESS, RatingKind.TRUST_INFO),
            (RatingKind.CLOSENESS, RatingKind.TRUST_BEST),
            (RatingKind.TRUST_INFO, RatingKind.TRUST_BEST),
        ]
        first = entries[0]
        assert first.partners.n == 60
        assert first.participants.n == 12
        assert first.coefficient > 0.5
        document = first.to_dict()
        assert document["first"] == "closeness"
        assert document["partners"]["n"] == 60

    def test_pairs_use_jointly_rated_partners(self):
        """Test that partners missing one answer drop out of that pair."""
        ratings = [
            Rating(closeness=1, trust_info=1, trust_best=2),
            Rating(closeness=2, trust_info=3, trust_best=1),
            Rating(closeness=3, trust_info=2, trust_best=3),
            Rating(closeness=4, trust_best=5),
        ]
        entries = correlation_matrix(ratings, n_participants=1)
        assert entries[0].partners.n == 3
        assert entries[1].partners.n == 4
        assert entries[0].participants is None

    def test_perfect_agreement_has_no_significance(self):
        """Test that r = 1 yields no t statistic instead of failing."""
        ratings = [Rating(closeness=v, trust_info=v, trust_best=6 - v) for v in (1, 2, 3, 4)]
        entries = correlation_matrix(ratings, n_participants=4)
        assert entries[0].coefficient == pytest.approx(1.0)
        assert entries[0].partners is None

    def test_spearman_method(self):
        """Test the rank-based matrix."""
        ratings = [Rating(closeness=v, trust_info=v * v % 5 + 1, trust_best=v) for v in range(1, 6)]
        pearson_entries = correlation_matrix(ratings, 5)
        spearman_entries = correlation_matrix(ratings, 5, CorrelationMethod.SPEARMAN)
        assert spearman_entries[1].coefficient == pytest.approx(1.0)
        assert pearson_entries[0].coefficient != spearman_entries[0].coefficient

    def test_too_few_pairs_are_recorded(self):
        """Test that fewer than 3 jointly rated partners leave the coefficient undefined."""
        entries = correlation_matrix([Rating(1, 2, 3), Rating(2, 3, 4)], 1)
        assert [e.coefficient for e in entries] == [None, None, None]
        assert all(e.n_pairs == 2 for e in entries)
        assert "at least 3" in entries[0].reason
        assert entries[0].to_dict()["r"] is None

    def test_single_rated_statement(self):
        """Test the minimal features file, where only trust_info is answered."""
        ratings = [Rating(trust_info=v) for v in (1, 2, 3, 4, 5)]
        entries = correlation_matrix(ratings, 1)
        assert all(e.coefficient is None for e in entries)
        assert [e.n_pairs for e in entries] == [0, 0, 0]
        text = format_correlations(entries)
        assert "nan" in text
        assert "significant" not in text

    def test_constant_statement_is_recorded(self):
        """Test that a statement without variance only drops its own pairs."""
        ratings = [Rating(closeness=v, trust_info=v, trust_best=3) for v in (1, 2, 3, 4)]
        entries = correlation_matrix(ratings, 4)
        assert entries[0].coefficient == pytest.approx(1.0)
        assert entries[1].coefficient is None
        assert entries[1].reason == "Input has zero variance"
        assert entries[2].coefficient is None

    def test_format(self):
        """Test the text rendering."""
        ratings = [Rating(closeness=v, trust_info=v % 3 + 1, trust_best=v) for v in range(1, 6)]
        text = format_correlations(correlation_matrix(ratings, 5))
        assert text.splitlines()[0].split() == ["closeness", "trust_info", "trust_best"]
        assert "1.0000" in text


class TestClassDistribution:
    """Tests for per-class rating histograms."""

    def test_histogram(self):
        """Test counting per class and level."""
        dataset = [("a", Rating(trust_info=5)), ("b", Rating(trust_info=1)), ("c", Rating())]
        assignment = {
            "a": InteractionClass.MOST_INTERACTIONS,
            "b": InteractionClass.RANDOM,
            "c": InteractionClass.RANDOM,
        }
        histogram = class_distribution(dataset, assignment)
        assert histogram[InteractionClass.MOST_INTERACTIONS][5] == 1
        assert histogram[InteractionClass.RANDOM] == {1: 1, 2: 0, 3: 0, 4: 0, 5: 0}
        assert sum(histogram[InteractionClass.LEAST_INTERACTIONS].values()) == 0

    def test_unassigned_partner_ignored(self):
        """Test that partners without a class are not counted."""
        histogram = class_distribution([("z", Rating(trust_info=3))], {})
        assert all(sum(counts.values()) == 0 for counts in histogram.values())

    def test_rows(self):
        """Test the flattened CSV rows."""
        histogram = class_distribution(
            [("a", Rating(trust_info=2))], {"a": InteractionClass.LEAST_INTERACTIONS}
        )
        rows = histogram_rows(histogram)
        assert len(rows) == 15
        assert {"interaction_class": "least", "level": 2, "count": 1} in rows

    @pytest.mark.slow
    def test_generated_population_shape(self):
        """Test that most-interaction partners peak at level 5 in a generated population."""
        devices = generate_population(SimConfig(n_devices=200, seed=0))
        dataset, assignment = [], {}
        for device in devices:
            for partner in device.log.partners:
                key = f"{device.device_id}/{partner.partner_id}"
                dataset.append((key, partner.rating))
                if partner.survey_position is not None:
                    assignment[key] = class_from_position(partner.survey_position)

        histogram = class_distribution(dataset, assignment)

        most = histogram[InteractionClass.MOST_INTERACTIONS]
        least = histogram[InteractionClass.LEAST_INTERACTIONS]
        assert max(most, key=most.__getitem__) == 5

        assert np.average(list(most), weights=list(most.values())) > np.average(
            list(least), weights=list(least.values())
        )


class TestCorpusStatistics:
    """Tests for level means and corpus summaries."""

    def test_level_means(self):
        """Test mean indicators per rating level."""
        dataset = [
            rated(trust_info=1, num_calls=2, rel_calls=1.0),
            rated(trust_info=1, num_calls=4, rel_calls=3.0),
            rated(trust_info=5, num_calls=40, rel_calls=30.0),
            rated(trust_info=None, num_calls=1000),
        ]
        means = level_means(dataset)
        assert [m.level for m in means] == [1, 5]
        assert means[0].partners == 2
        assert means[0].num_calls == 3.0
        assert means[1].rel_calls == 30.0

    def test_summarize_corpus(self):
        """Test general observations over the fixture corpus."""
        logs = make_corpus(4)
        summary = summarize_corpus(logs)
        assert summary.participants == 4
        assert summary.partners == 60
        assert summary.rated_share == pytest.approx(52 / 60)
        assert summary.active_partners_mean == 15.0
        assert summary.span_mean_days == pytest.approx(30.0)
        assert summary.span_over_week == 1.0
        assert summary.span_over_month == 0.0
        assert summary.favorite_adopters == 4
        assert summary.favorites_per_adopter == 4.0
        assert summary.tagging_participants == 0
        assert summary.volume_span_correlation is None
        assert summary.to_dict()["participants"] == 4

    def test_tags_counted(self):
        """Test tag usage statistics."""
        log = make_log("p", [make_partner("a", calls=2, tag="home"), make_partner("b")])
        summary = summarize_corpus([log])
        assert summary.tagging_participants == 1
        assert summary.tag_counts == {"home": 2}

    def test_empty_corpus(self):
        """Test that an empty corpus cannot be summarized."""
        with pytest.raises(DegenerateInput):
            summarize_corpus([])
