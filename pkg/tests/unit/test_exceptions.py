"""Unit tests for exception classes."""

from socialtrust.exceptions import (
    ArtifactError,
    ConfigError,
    DegenerateInput,
    EmptyReferencePopulation,
    EmptySalt,
    IngestError,
    InvalidConfig,
    MetricError,
    NoPartnerSatisfiesRule,
    NoRatedFavorites,
    NoRatedPartners,
    ParseError,
    ProtocolError,
    ProtocolTimeout,
    PSIError,
    SaltMismatch,
    SchemaError,
    SimulationError,
    SocialTrustError,
    StatisticsError,
    UnknownProbability,
)


def test_socialtrust_error_is_base_exception():
    """Test that SocialTrustError is the base exception."""
    error = SocialTrustError("test error")
    assert isinstance(error, Exception)
    assert str(error) == "test error"


def test_ingest_errors_inherit_from_ingest_error():
    """Test ParseError and SchemaError inheritance."""
    assert isinstance(ParseError("bad yaml"), IngestError)
    assert isinstance(SchemaError("bad", "general"), IngestError)
    assert isinstance(ParseError("bad yaml"), SocialTrustError)


def test_schema_error_carries_path():
    """Test SchemaError prefixes its message with the offending path."""
    error = SchemaError("expected an integer", "partners[0].calls[1].duration")
    assert error.path == "partners[0].calls[1].duration"
    assert str(error) == "partners[0].calls[1].duration: expected an integer"


def test_schema_error_without_path():
    """Test SchemaError at the document root."""
    error = SchemaError("expected a mapping", "")
    assert str(error) == "expected a mapping"


def test_metric_errors_inherit_from_metric_error():
    """Test metric error inheritance."""
    for error in (
        EmptyReferencePopulation("x"),
        NoPartnerSatisfiesRule("x"),
        NoRatedFavorites("x"),
        NoRatedPartners("x"),
        UnknownProbability(0.5, (0.75, 0.9)),
    ):
        assert isinstance(error, MetricError)
        assert isinstance(error, SocialTrustError)


def test_unknown_probability_lists_available():
    """Test UnknownProbability message and attributes."""
    error = UnknownProbability(0.5, (0.75, 0.9))
    assert error.probability == 0.5
    assert error.available == (0.75, 0.9)
    assert "0.75, 0.9" in str(error)


def test_statistics_and_psi_errors():
    """Test DegenerateInput and PSI error inheritance."""
    assert isinstance(DegenerateInput("x"), StatisticsError)
    assert isinstance(EmptySalt("x"), PSIError)
    assert isinstance(SaltMismatch("x"), PSIError)
    assert isinstance(SaltMismatch("x"), SocialTrustError)


def test_simulation_errors():
    """Test simulation error inheritance and timeout trace."""
    assert isinstance(InvalidConfig("x"), SimulationError)
    assert isinstance(ProtocolError("x"), SimulationError)
    timeout = ProtocolTimeout("lost", [])
    assert isinstance(timeout, SimulationError)
    assert timeout.trace == []


def test_config_and_artifact_errors():
    """Test standalone error classes."""
    assert isinstance(ConfigError("x"), SocialTrustError)
    assert isinstance(ArtifactError("x"), SocialTrustError)
