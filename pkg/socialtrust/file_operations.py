"""File operations for pipeline artifacts.

Provides atomic writes (temporary file plus rename) and the readers/writers for the
line-delimited JSON and CSV artifacts that connect the pipeline stages.
"""

import io
import json
import os
import tempfile
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import pandas as pd

from .exceptions import ArtifactError


def atomic_write_text(path: Path, text: str) -> None:
    """Write text to a file so that readers never observe a partial file.

    Creates parent directories if they don't exist. The content is written to a
    temporary file in the destination directory and renamed over the target.

    Args:
        path: Destination file path (replaced if it exists)
        text: Content to write

    Raises:
        ArtifactError: If the file cannot be written
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    except OSError as e:
        raise ArtifactError(f"Failed to create temporary file for {path}: {e}") from e

    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        Path(tmp_name).replace(path)
    except OSError as e:
        Path(tmp_name).unlink(missing_ok=True)
        raise ArtifactError(f"Failed to write {path}: {e}") from e


def read_text(path: Path) -> str:
    """Read a UTF-8 text artifact.

    Raises:
        ArtifactError: If the file is missing or unreadable
    """
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ArtifactError(f"Failed to read {path}: {e}") from e


def frame_to_csv(frame: pd.DataFrame) -> str:
    """Render a DataFrame as CSV text without the index, ``\\n`` line endings."""
    return str(frame.to_csv(index=False, lineterminator="\n"))


def render_csv(header: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    """Render rows as CSV text with a header line.

    Values are written as given (object dtype), so integer columns with gaps stay
    integers and ``None`` becomes an empty field.
    """
    frame = pd.DataFrame(list(rows), columns=list(header), dtype=object)
    return frame_to_csv(frame)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    """Atomically write rows to a CSV file."""
    atomic_write_text(path, render_csv(header, rows))


def write_frame(path: Path, frame: pd.DataFrame) -> None:
    """Atomically write a DataFrame as CSV."""
    atomic_write_text(path, frame_to_csv(frame))


def read_frame(path: Path, required: Sequence[str] = ()) -> pd.DataFrame:
    """Read a CSV file with every column as text.

    Empty fields stay empty strings; typed conversion is left to the caller.

    Args:
        path: CSV file to read
        required: Columns that must be present

    Raises:
        ArtifactError: If the file is unreadable, malformed or lacks a required column
    """
    text = read_text(path)
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    except pd.errors.ParserError as e:
        raise ArtifactError(f"{path}: malformed CSV: {e}") from e
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ArtifactError(f"{path} is missing column(s): {', '.join(missing)}")
    return frame


def write_jsonl(path: Path, records: Iterable[Mapping[str, Any]]) -> None:
    """Atomically write one JSON document per line, keys sorted."""
    lines = [json.dumps(record, sort_keys=True, separators=(",", ":")) for record in records]
    atomic_write_text(path, "".join(f"{line}\n" for line in lines))


def read_jsonl(path: Path) -> list[dict[str, Any]]:
    """Read a line-delimited JSON file, skipping blank lines.

    Raises:
        ArtifactError: If a line is not a JSON object
    """
    records: list[dict[str, Any]] = []
    for number, line in enumerate(read_text(path).splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ArtifactError(f"{path}:{number}: invalid JSON: {e}") from e
        if not isinstance(record, dict):
            raise ArtifactError(f"{path}:{number}: expected a JSON object")
        records.append(record)
    return records


def write_json(path: Path, document: Any) -> None:
    """Atomically write a JSON document with sorted keys and a trailing newline."""
    atomic_write_text(path, json.dumps(document, indent=2, sort_keys=True) + "\n")


def read_json(path: Path) -> Any:
    """Read a JSON document.

    Raises:
        ArtifactError: If the file is not valid JSON
    """
    try:
        return json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path}: invalid JSON: {e}") from e
