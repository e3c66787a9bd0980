"""Contract tests for 'socialtrust stats' and 'socialtrust compare'."""

import csv
import json
from pathlib import Path

import pytest
import yaml

from socialtrust.features import REQUIRED_COLUMNS
from tests.helpers import run_cli


class TestStatsCommand:
    """Test stats command behavior."""

    def test_statistics_document(self, features_csv: Path, corpus_dir: Path, tmp_path: Path):
        """Test correlations, level means and the corpus summary."""
        run_cli("ingest", "--in", str(corpus_dir), "--out", "logs.jsonl", cwd=tmp_path)

        result = run_cli(
            "stats",
            "--features",
            str(features_csv),
            "--logs",
            "logs.jsonl",
            "--out",
            "stats.json",
            "--histograms",
            "classes.csv",
            cwd=tmp_path,
        )

        assert result.returncode == 0, result.stderr
        document = json.loads((tmp_path / "stats.json").read_text())
        assert document["method"] == "pearson"
        pairs = [(c["first"], c["second"]) for c in document["correlations"]]
        assert pairs == [
            ("closeness", "trust_info"),
            ("closeness", "trust_best"),
            ("trust_info", "trust_best"),
        ]
        assert document["corpus"]["participants"] == 6
        with open(tmp_path / "classes.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert {row["interaction_class"] for row in rows} == {"most", "least", "random"}
        assert len(rows) == 15
        assert sum(int(row["count"]) for row in rows) > 0
        assert "closeness" in result.stdout

    def test_minimal_columns(self, features_csv: Path, tmp_path: Path):
        """Test a features file whose only rating column is rating_trust_info."""
        keep = len(REQUIRED_COLUMNS)
        lines = [
            ",".join(line.split(",")[:keep]) for line in features_csv.read_text().splitlines()
        ]
        (tmp_path / "minimal.csv").write_text("\n".join(lines) + "\n")

        result = run_cli(
            "stats",
            "--features",
            "minimal.csv",
            "--out",
            "stats.json",
            "--histograms",
            "classes.csv",
            cwd=tmp_path,
        )

        assert result.returncode == 0, result.stderr
        document = json.loads((tmp_path / "stats.json").read_text())
        assert [c["r"] for c in document["correlations"]] == [None, None, None]
        assert all(c["reason"] for c in document["correlations"])
        assert [m["level"] for m in document["level_means"]] == [1, 2, 3, 4, 5]
        assert (tmp_path / "classes.csv").exists()

    def test_spearman(self, features_csv: Path, tmp_path: Path):
        """Test the rank correlation method."""
        result = run_cli(
            "stats",
            "--features",
            str(features_csv),
            "--method",
            "spearman",
            "--out",
            "stats.json",
            cwd=tmp_path,
        )

        assert result.returncode == 0, result.stderr
        assert json.loads((tmp_path / "stats.json").read_text())["method"] == "spearman"


class TestCompareCommand:
    """Test compare command behavior."""

    @pytest.mark.parametrize("scheme", ["A", "B"])
    def test_report(self, features_csv: Path, tmp_path: Path, scheme: str):
        """Test the per-participant error report."""
        result = run_cli(
            "compare",
            "--features",
            str(features_csv),
            "--scheme",
            scheme,
            "--include-messages",
            "--out",
            "compare.csv",
            cwd=tmp_path,
        )

        assert result.returncode == 0, result.stderr
        with open(tmp_path / "compare.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 7
        assert rows[-1]["participant_id"] == "ALL"
        assert 0.0 <= float(rows[-1]["mean_error"]) <= 1.0
        assert f"scheme {scheme}, calls + messages" in result.stdout

    def test_config_cutoffs(self, features_csv: Path, tmp_path: Path):
        """Test that cutoffs come from --config when not given."""
        (tmp_path / "engine.yaml").write_text(yaml.safe_dump({"closeness_cutoffs": [0, 1]}))

        result = run_cli(
            "--config", "engine.yaml", "compare", "--features", str(features_csv), cwd=tmp_path
        )

        assert result.returncode == 0, result.stderr
        assert "cutoffs 0,1" in result.stdout

    def test_invalid_config(self, features_csv: Path, tmp_path: Path):
        """Test that an unknown configuration key exits with 1."""
        (tmp_path / "engine.yaml").write_text("colour: blue\n")

        result = run_cli(
            "--config", "engine.yaml", "compare", "--features", str(features_csv), cwd=tmp_path
        )

        assert result.returncode == 1
        assert "ConfigError" in result.stderr

    def test_invalid_cutoffs(self, features_csv: Path, tmp_path: Path):
        """Test that malformed cutoffs are usage errors."""
        result = run_cli(
            "compare", "--features", str(features_csv), "--cutoffs", "10", cwd=tmp_path
        )

        assert result.returncode == 2
