"""Unit tests for file operations module."""

from pathlib import Path

import pandas as pd
import pytest

from socialtrust.exceptions import ArtifactError
from socialtrust.file_operations import (
    atomic_write_text,
    read_frame,
    read_json,
    read_jsonl,
    read_text,
    render_csv,
    write_csv,
    write_frame,
    write_json,
    write_jsonl,
)


class TestAtomicWrite:
    """Tests for atomic_write_text."""

    def test_creates_parent_directories(self, tmp_path: Path):
        """Test that missing parents are created."""
        target = tmp_path / "a" / "b" / "out.txt"
        atomic_write_text(target, "hello")
        assert target.read_text() == "hello"

    def test_replaces_existing_file(self, tmp_path: Path):
        """Test that an existing file is replaced."""
        target = tmp_path / "out.txt"
        target.write_text("old")
        atomic_write_text(target, "new")
        assert target.read_text() == "new"

    def test_leaves_no_temporary_files(self, tmp_path: Path):
        """Test that only the target remains after a write."""
        atomic_write_text(tmp_path / "out.txt", "x")
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]

    def test_target_is_directory(self, tmp_path: Path):
        """Test that an unwritable target raises ArtifactError."""
        target = tmp_path / "dir"
        target.mkdir()
        (target / "keep").write_text("x")
        with pytest.raises(ArtifactError, match="Failed to write"):
            atomic_write_text(target, "x")
        assert [p.name for p in tmp_path.iterdir()] == ["dir"]


class TestReaders:
    """Tests for artifact readers."""

    def test_read_missing_file(self, tmp_path: Path):
        """Test reading a missing file."""
        with pytest.raises(ArtifactError, match="Failed to read"):
            read_text(tmp_path / "missing.txt")

    def test_csv_round_trip(self, tmp_path: Path):
        """Test CSV writing and reading with required columns."""
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b"], [{"a": 1, "b": "x"}, {"a": 2, "b": ""}])
        assert path.read_text() == "a,b\n1,x\n2,\n"
        frame = read_frame(path, required=["a"])
        assert frame.to_dict("records") == [{"a": "1", "b": "x"}, {"a": "2", "b": ""}]

    def test_csv_keeps_integers_with_gaps(self, tmp_path: Path):
        """Test that None is written empty without turning integers into floats."""
        path = tmp_path / "t.csv"
        write_csv(path, ["level", "score"], [{"level": 3, "score": 0.5}, {"level": None}])
        assert path.read_text() == "level,score\n3,0.5\n,\n"

    def test_csv_missing_column(self, tmp_path: Path):
        """Test that a missing required column is reported."""
        path = tmp_path / "t.csv"
        path.write_text("a\n1\n")
        with pytest.raises(ArtifactError, match="missing column"):
            read_frame(path, required=["a", "b"])

    def test_empty_csv(self, tmp_path: Path):
        """Test that an empty file has no columns."""
        path = tmp_path / "t.csv"
        path.write_text("")
        assert read_frame(path).empty
        with pytest.raises(ArtifactError, match="missing column"):
            read_frame(path, required=["a"])

    def test_write_frame(self, tmp_path: Path):
        """Test writing a DataFrame without its index."""
        path = tmp_path / "t.csv"
        write_frame(path, pd.DataFrame({"x": [1, 2], "y": ["a", "b"]}))
        assert path.read_text() == "x,y\n1,a\n2,b\n"

    def test_render_csv_header_only(self):
        """Test rendering without rows."""
        assert render_csv(["x", "y"], []) == "x,y\n"

    def test_jsonl_sorted_and_blank_lines(self, tmp_path: Path):
        """Test JSONL output is key-sorted and blank lines are skipped on read."""
        path = tmp_path / "l.jsonl"
        write_jsonl(path, [{"b": 1, "a": 2}, {"c": [1, 2]}])
        assert path.read_text().splitlines()[0] == '{"a":2,"b":1}'
        path.write_text(path.read_text() + "\n\n")
        assert read_jsonl(path) == [{"a": 2, "b": 1}, {"c": [1, 2]}]

    def test_jsonl_rejects_non_objects(self, tmp_path: Path):
        """Test that every line must be an object."""
        path = tmp_path / "l.jsonl"
        path.write_text("[1, 2]\n")
        with pytest.raises(ArtifactError, match="expected a JSON object"):
            read_jsonl(path)

    def test_jsonl_invalid_json(self, tmp_path: Path):
        """Test line numbers in JSON errors."""
        path = tmp_path / "l.jsonl"
        path.write_text('{"a": 1}\n{oops\n')
        with pytest.raises(ArtifactError, match=":2: invalid JSON"):
            read_jsonl(path)

    def test_json_document(self, tmp_path: Path):
        """Test JSON documents end with a newline and read back."""
        path = tmp_path / "d.json"
        write_json(path, {"z": 1, "a": [0.5]})
        assert path.read_text().endswith("}\n")
        assert read_json(path) == {"z": 1, "a": [0.5]}

    def test_invalid_json_document(self, tmp_path: Path):
        """Test that malformed JSON raises ArtifactError."""
        path = tmp_path / "d.json"
        path.write_text("{")
        with pytest.raises(ArtifactError):
            read_json(path)
