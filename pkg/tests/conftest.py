"""Shared test fixtures and configuration."""

import os
from pathlib import Path

import pytest
import yaml

from socialtrust.features import feature_table, write_feature_table
from socialtrust.ingest import to_document
from socialtrust.models import ParticipantLog

from tests.helpers import make_corpus


@pytest.fixture(autouse=True)
def reset_cli_globals():
    """Reset CLI global variables before and after each test."""
    from socialtrust import cli

    # Save original values
    original_verbose = cli._verbose
    original_quiet = cli._quiet

    # Reset to defaults
    cli._verbose = False
    cli._quiet = False

    yield

    # Restore original values
    cli._verbose = original_verbose
    cli._quiet = original_quiet


@pytest.fixture(autouse=True)
def preserve_cwd():
    """Preserve and restore the current working directory for each test."""
    original_cwd = os.getcwd()

    yield

    # Handle case where the directory might have been deleted
    try:
        os.chdir(original_cwd)
    except (FileNotFoundError, OSError):
        os.chdir(Path(__file__).parent.parent)


@pytest.fixture
def corpus() -> list[ParticipantLog]:
    """Six valid participant logs with ratings at every level."""
    return make_corpus()


@pytest.fixture
def corpus_dir(tmp_path: Path, corpus: list[ParticipantLog]) -> Path:
    """Directory of YAML survey results, one file per participant."""
    directory = tmp_path / "corpus"
    directory.mkdir()
    for index, log in enumerate(corpus):
        document = to_document(log)
        document["worker"] = f"w{index}"
        document["submitted"] = index
        (directory / f"{log.participant_id}.yaml").write_text(
            yaml.safe_dump(document, sort_keys=False)
        )
    return directory


@pytest.fixture
def features_csv(tmp_path: Path, corpus: list[ParticipantLog]) -> Path:
    """Features CSV of the fixture corpus."""
    path = tmp_path / "features.csv"
    write_feature_table(path, feature_table(corpus))
    return path
