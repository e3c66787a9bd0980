"""Engine configuration.

Collects the tunable choices of the pipeline in one frozen dataclass that can be loaded
from a YAML file given with ``--config``. Missing keys take their defaults; unknown keys
are rejected.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .closeness import Cutoffs
from .exceptions import ArtifactError, ConfigError
from .file_operations import read_text
from .ingest import FilterPolicy
from .models import RatingKind
from .psi import CombinationParams
from .trustmetric import GradingBands, QuantileMode

CONFIG_KEYS = frozenset(
    {
        "filter_policy",
        "grading",
        "combination",
        "reference_rating",
        "quantile_mode",
        "closeness_cutoffs",
        "closeness_rating",
    }
)


@dataclass(frozen=True)
class EngineConfig:
    """Tunable engine settings.

    Attributes:
        filter_policy: Dataset exclusion thresholds
        grading: Quantile band -> trust grade mapping
        combination: Weights for combining mutual-contact evidence
        reference_rating: Statement whose level-1 population calibrates the quantiles
        quantile_mode: Pooled or per-participant calibration
        closeness_cutoffs: Activity cutoffs of the closeness classifier
        closeness_rating: Statement binned as ground truth in closeness comparisons
    """

    filter_policy: FilterPolicy = field(default_factory=FilterPolicy)
    grading: GradingBands = field(default_factory=GradingBands)
    combination: CombinationParams = field(default_factory=CombinationParams)
    reference_rating: RatingKind = RatingKind.TRUST_INFO
    quantile_mode: QuantileMode = QuantileMode.POOLED
    closeness_cutoffs: Cutoffs = field(default_factory=lambda: Cutoffs(2.0, 10.0))
    closeness_rating: RatingKind = RatingKind.CLOSENESS

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a YAML/JSON-compatible mapping."""
        policy = self.filter_policy
        return {
            "filter_policy": {
                "min_span_days": policy.min_span_days,
                "min_partners_for_short_logs": policy.min_partners_for_short_logs,
                "min_partners_absolute": policy.min_partners_absolute,
            },
            "grading": {str(p): g for p, g in sorted(self.grading.grades.items())},
            "combination": {
                "weight": self.combination.weight,
                "saturation": self.combination.saturation,
            },
            "reference_rating": self.reference_rating.value,
            "quantile_mode": self.quantile_mode.value,
            "closeness_cutoffs": [self.closeness_cutoffs.low, self.closeness_cutoffs.high],
            "closeness_rating": self.closeness_rating.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EngineConfig":
        """Build a configuration from a mapping, defaulting missing keys.

        Raises:
            ConfigError: If a key is unknown or a value is invalid
        """
        unknown = sorted(set(data) - CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"Unknown configuration key(s): {', '.join(unknown)}")
        defaults = cls()
        try:
            policy = data.get("filter_policy")
            grading = data.get("grading")
            combination = data.get("combination")
            cutoffs = data.get("closeness_cutoffs")
            return cls(
                filter_policy=FilterPolicy(**policy) if policy else defaults.filter_policy,
                grading=(
                    GradingBands({float(p): int(g) for p, g in grading.items()})
                    if grading
                    else defaults.grading
                ),
                combination=(
                    CombinationParams(**combination) if combination else defaults.combination
                ),
                reference_rating=RatingKind(
                    data.get("reference_rating", defaults.reference_rating.value)
                ),
                quantile_mode=QuantileMode(data.get("quantile_mode", defaults.quantile_mode.value)),
                closeness_cutoffs=(
                    Cutoffs(float(cutoffs[0]), float(cutoffs[1]))
                    if cutoffs
                    else defaults.closeness_cutoffs
                ),
                closeness_rating=RatingKind(
                    data.get("closeness_rating", defaults.closeness_rating.value)
                ),
            )
        except (TypeError, ValueError, AttributeError, IndexError) as e:
            raise ConfigError(f"Invalid configuration: {e}") from e


def load_config(path: Path | None) -> EngineConfig:
    """Load an engine configuration file; ``None`` yields the defaults.

    Raises:
        ConfigError: If the file cannot be read or is not a valid configuration
    """
    if path is None:
        return EngineConfig()
    try:
        data = yaml.safe_load(read_text(path))
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {path}: {e}") from e
    except ArtifactError as e:
        raise ConfigError(f"Cannot read configuration {path}: {e}") from e
    if data is None:
        return EngineConfig()
    if not isinstance(data, Mapping):
        raise ConfigError(f"Configuration {path} must be a mapping")
    return EngineConfig.from_dict(data)
