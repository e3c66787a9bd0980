"""Command-line interface for socialtrust.

Provides argparse-based CLI with subcommands for ingest, features, calibrate, predict,
evaluate, stats, compare and simulate. Stages exchange files: line-delimited JSON for
logs, CSV for features and predictions, JSON for quantile tables.
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from .closeness import (
    SCHEMES,
    ActivityClassifier,
    Aggregation,
    Cutoffs,
    ErrorMode,
    error_report,
)
from .config import EngineConfig, load_config
from .exceptions import ArtifactError, ConfigError, SocialTrustError
from .features import FeatureRow, feature_table, read_feature_table, write_feature_table
from .file_operations import read_json, read_text, write_csv, write_json
from .ingest import (
    DedupeResult,
    FilterPolicy,
    class_from_position,
    dedupe_participants,
    filter_dataset,
    load_corpus,
    read_logs_jsonl,
    write_logs_jsonl,
)
from .models import LIKERT_LEVELS, FeatureVector, PartnerRecord, Rating, RatingKind
from .population import SimConfig, SpanDistribution, generate_population
from .simnet import SCENARIO_COLUMNS, TrustSettings, parse_plan, run_scenario
from .statistics import (
    CorrelationMethod,
    class_distribution,
    correlation_matrix,
    format_correlations,
    histogram_rows,
    level_means,
    summarize_corpus,
)
from .trustmetric import (
    PROBABILITIES,
    OrAny,
    QuantileMode,
    QuantileTable,
    TrustPredictor,
    build_rule,
    calibrate,
    evaluate_rule,
    favorites_table,
    parse_combinator,
    rank_pair_rules,
    reference_table,
)

# Global flags for output control
_verbose = False
_quiet = False
logger = logging.getLogger("socialtrust")

PREDICTION_COLUMNS = (
    "participant_id",
    "partner_id",
    "predicted_trusted",
    "grade",
    "band",
    "triggered",
)
EXCLUSION_COLUMNS = ("participant_id", "worker_id", "reason")
COMPARE_COLUMNS = ("participant_id", "rated_partners", "errors", "mean_error")
HISTOGRAM_COLUMNS = ("interaction_class", "level", "count")


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Configure logging based on verbosity flags.

    Args:
        verbose: Enable verbose/debug output
        quiet: Suppress non-error output
    """
    global _verbose, _quiet
    _verbose = verbose
    _quiet = quiet

    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.ERROR
    else:
        level = logging.INFO

    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    if verbose:
        formatter = logging.Formatter(
            "%(asctime)s [%(levelname)s] %(name)s: %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
        )
    else:
        formatter = logging.Formatter("%(levelname)s: %(message)s")
    handler.setFormatter(formatter)

    # Repeated main() calls in one process must not stack handlers
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(level)


def should_print(level: str = "info") -> bool:
    """Check if output should be printed based on quiet flag.

    Args:
        level: Output level ("info", "error", "debug")

    Returns:
        True if output should be printed
    """
    return not (_quiet and level in ("info", "debug"))


def _engine_config(args: argparse.Namespace) -> EngineConfig:
    return load_config(Path(args.config) if args.config else None)


def _load_features(path: str) -> list[FeatureRow]:
    return read_feature_table(Path(path))


def _rated_pairs(rows: Sequence[FeatureRow]) -> list[tuple[FeatureVector, Rating]]:
    return [(row.features, row.rating) for row in rows]


def _grouped(rows: Sequence[FeatureRow]) -> dict[str, list[tuple[FeatureVector, Rating]]]:
    groups: dict[str, list[tuple[FeatureVector, Rating]]] = {}
    for row in rows:
        groups.setdefault(row.participant_id, []).append((row.features, row.rating))
    return groups


def _load_table(path: str | None) -> QuantileTable:
    if path is None:
        return reference_table()
    try:
        return QuantileTable.from_dict(read_json(Path(path)))
    except ValueError as e:
        raise ArtifactError(f"{path}: {e}") from e


def _load_policy(source: str, config: EngineConfig) -> FilterPolicy:
    if source == "default":
        return config.filter_policy
    try:
        data = yaml.safe_load(read_text(Path(source))) or {}
        return FilterPolicy(**data)
    except (yaml.YAMLError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid filter policy {source}: {e}") from e


def _write_report(path: Path, fmt: str, header: Sequence[str], rows: list[dict[str, Any]]) -> None:
    if fmt == "json":
        write_json(path, rows)
    else:
        write_csv(path, header, rows)


def _exclusion_rows(dedupe: DedupeResult, excluded: list[Any]) -> list[dict[str, Any]]:
    rows = [
        {"participant_id": log.participant_id, "worker_id": worker, "reason": "DoubleSubmission"}
        for worker, log in dedupe.duplicates
    ]
    rows.extend(
        {"participant_id": e.log.participant_id, "worker_id": "", "reason": e.reason.value}
        for e in excluded
    )
    return rows


def ingest_command(args: argparse.Namespace) -> int:
    """Handle the 'ingest' command.

    Args:
        args: Parsed command-line arguments

    Returns:
        Exit code (0 for success)
    """
    config = _engine_config(args)
    policy = _load_policy(args.policy, config)
    submissions = load_corpus(Path(p) for p in args.inputs)
    if should_print("info"):
        print(f"Parsed {len(submissions)} survey result(s)")

    pairs = [(s.worker_id, s.log) for s in submissions]
    if args.no_dedupe:
        dedupe = DedupeResult(kept=[log for _, log in pairs])
    else:
        dedupe = dedupe_participants(pairs)
    result = filter_dataset(dedupe.kept, policy)

    out = Path(args.out)
    write_logs_jsonl(out, result.kept)
    if args.report:
        report = Path(args.report)
    else:
        report = out.with_name(f"{out.stem}.exclusions.{args.format}")
    _write_report(report, args.format, EXCLUSION_COLUMNS, _exclusion_rows(dedupe, result.excluded))

    if should_print("info"):
        print(
            f"Kept {len(result.kept)} log(s); {len(dedupe.duplicates)} double submission(s), "
            f"{len(result.excluded)} excluded"
        )
        print(f"  Logs: {out}")
        print(f"  Exclusions: {report}")
    return 0


def features_command(args: argparse.Namespace) -> int:
    """Handle the 'features' command."""
    logs = read_logs_jsonl(Path(args.inputs))
    rows = feature_table(logs)
    write_feature_table(Path(args.out), rows)
    if should_print("info"):
        print(f"Wrote {len(rows)} feature row(s) for {len(logs)} participant(s) to {args.out}")
    return 0


def calibrate_command(args: argparse.Namespace) -> int:
    """Handle the 'calibrate' command."""
    config = _engine_config(args)
    rows = _load_features(args.features)
    rating = RatingKind(args.rating) if args.rating else config.reference_rating
    mode = QuantileMode(args.mode) if args.mode else config.quantile_mode
    table = calibrate(_grouped(rows), mode, args.level, rating)
    write_json(Path(args.out), table.to_dict())
    if should_print("info"):
        print(table.format_table())
        print(f"\nCalibrated over {table.population} partner(s); table written to {args.out}")
    return 0


def predict_command(args: argparse.Namespace) -> int:
    """Handle the 'predict' command."""
    config = _engine_config(args)
    table = _load_table(args.table)
    predictor = TrustPredictor(table, args.combinator, args.favorites_only, config.grading)
    rows = _load_features(args.features)
    output: list[dict[str, Any]] = []
    trusted = 0
    for row in rows:
        prediction = predictor.predict(row.features)
        trusted += prediction.predicted_trusted
        output.append(
            {
                "participant_id": row.participant_id,
                "partner_id": row.partner_id,
                "predicted_trusted": int(prediction.predicted_trusted),
                "grade": prediction.grade.level,
                "band": (
                    "" if prediction.confidence_band is None
                    else f"{prediction.confidence_band:.2f}"
                ),
                "triggered": ";".join(t.variable.value for t in prediction.triggered),
            }
        )
    _write_report(Path(args.out), args.format, PREDICTION_COLUMNS, output)
    if should_print("info"):
        print(f"Predicted {trusted} of {len(rows)} partner(s) trusted; written to {args.out}")
    return 0


def evaluate_command(args: argparse.Namespace) -> int:
    """Handle the 'evaluate' command."""
    config = _engine_config(args)
    table = _load_table(args.table)
    rows = _load_features(args.features)
    dataset = _rated_pairs(rows)
    rating = RatingKind(args.rating) if args.rating else config.reference_rating
    rule = build_rule(table, args.prob, args.combinator, args.favorites_only)
    distribution = evaluate_rule(dataset, rule, rating)
    document: dict[str, Any] = {
        "rule": rule.describe(),
        "probability": rule.quantile_prob,
        "distribution": distribution.to_dict(),
    }
    if should_print("info"):
        print(distribution.format_table(f"Rating levels for {rule.describe()}"))

    if args.favorites:
        partners = [
            PartnerRecord(
                partner_id=row.partner_id, rating=row.rating, is_favorite=row.features.is_favorite
            )
            for row in rows
        ]
        favorites = favorites_table(partners, rating)
        document["favorites"] = favorites.to_dict()
        if should_print("info"):
            print()
            print(favorites.format_table("Rating levels for contacts tagged as favorites"))

    if args.rank_pairs:
        ranked = rank_pair_rules(dataset, table, args.prob, args.favorites_only, 3, rating)
        document["pairs"] = [
            {
                "rule": result.rule.describe(),
                "satisfying": result.distribution.total,
                "share_level_3_plus": round(result.share_at_least, 2),
            }
            for result in ranked
        ]
        if should_print("info"):
            print("\nAND pairs ranked by share rated 3 or higher:")
            for result in ranked:
                print(
                    f"  {result.share_at_least:6.2f}%  n={result.distribution.total:<5} "
                    f"{result.rule.describe()}"
                )

    if args.out:
        write_json(Path(args.out), document)
    return 0


def stats_command(args: argparse.Namespace) -> int:
    """Handle the 'stats' command."""
    config = _engine_config(args)
    rows = _load_features(args.features)
    method = CorrelationMethod(args.method)
    participants = {row.participant_id for row in rows}
    entries = correlation_matrix((row.rating for row in rows), len(participants), method)

    assignment = {
        f"{row.participant_id}/{row.partner_id}": class_from_position(row.survey_position)
        for row in rows
        if row.survey_position is not None
    }
    histogram = class_distribution(
        ((f"{row.participant_id}/{row.partner_id}", row.rating) for row in rows),
        assignment,
        config.reference_rating,
    )
    document: dict[str, Any] = {
        "method": method.value,
        "participants": len(participants),
        "partners": len(rows),
        "correlations": [entry.to_dict() for entry in entries],
        "level_means": [
            asdict(m) for m in level_means(_rated_pairs(rows), config.reference_rating)
        ],
    }
    if args.logs:
        document["corpus"] = summarize_corpus(read_logs_jsonl(Path(args.logs))).to_dict()

    write_json(Path(args.out), document)
    if args.histograms:
        _write_report(
            Path(args.histograms), args.format, HISTOGRAM_COLUMNS, histogram_rows(histogram)
        )
    if should_print("info"):
        print(format_correlations(entries))
        print(f"\nStatistics written to {args.out}")
    return 0


def compare_command(args: argparse.Namespace) -> int:
    """Handle the 'compare' command."""
    config = _engine_config(args)
    rows = _load_features(args.features)
    cutoffs = args.cutoffs or config.closeness_cutoffs
    classifier = ActivityClassifier(cutoffs, args.include_messages)
    rating = RatingKind(args.rating) if args.rating else config.closeness_rating
    report = error_report(
        _grouped(rows),
        classifier,
        SCHEMES[args.scheme],
        rating,
        ErrorMode(args.mode),
        Aggregation.POOLED if args.pooled else Aggregation.PER_PARTICIPANT,
    )
    if args.out:
        _write_report(Path(args.out), args.format, COMPARE_COLUMNS, report.rows())
    if should_print("info"):
        activity = "calls + messages" if args.include_messages else "calls"
        print(
            f"Mean error ({report.mode.value}, {report.aggregation.value}, scheme {args.scheme}, "
            f"{activity}, cutoffs {cutoffs.low:g},{cutoffs.high:g}): {report.aggregate:.4f}"
        )
    return 0


def simulate_command(args: argparse.Namespace) -> int:
    """Handle the 'simulate' command."""
    config = _engine_config(args)
    sim = SimConfig(
        n_devices=args.devices,
        seed=args.seed,
        span_days_mean=args.span_mean,
        span_distribution=SpanDistribution(args.span_distribution),
        trust_coupling=args.coupling,
        degenerate_fraction=args.degenerate_fraction,
        loss=args.loss,
        max_retries=args.max_retries,
    )
    plan = parse_plan(args.pairs, sim.n_devices, sim.seed)
    devices = generate_population(sim) if plan or args.population else []
    if args.population:
        write_logs_jsonl(Path(args.population), (device.log for device in devices))

    table = _load_table(args.table)
    settings = TrustSettings(
        table=table,
        combinator=args.combinator,
        params=config.combination,
        bands=config.grading,
    )
    report = run_scenario(sim, plan, table, settings, args.tolerate_failures, devices or None)

    out = Path(args.out)
    if args.format == "json":
        write_json(out, report.to_dict())
    else:
        write_csv(out, SCENARIO_COLUMNS, report.rows())
    if args.summary:
        write_json(Path(args.summary), report.summary())

    if should_print("info"):
        summary = report.summary()
        print(
            f"Ran {summary['pairs']} pair(s) over {sim.n_devices} device(s): "
            f"{summary['failed']} failed, mean combined {summary['mean_combined']:.4f}, "
            f"mean gap {summary['mean_gap']:.4f}"
        )
        print(f"  Report: {out}")
    return 0


def handle_global_error(error: BaseException) -> int:
    """Global error handler.

    Args:
        error: Exception that was raised

    Returns:
        Appropriate exit code (1 for data errors, 2 for unexpected errors, 130 on interrupt)
    """
    if isinstance(error, KeyboardInterrupt):
        return 130

    if isinstance(error, SocialTrustError):
        logger.error(f"{type(error).__name__}: {error}")
        return 1

    logger.error(f"Unexpected error: {error}")
    if _verbose:
        import traceback

        traceback.print_exc()
    return 2


def _probability(text: str) -> float:
    value = float(text)
    if not any(abs(value - p) < 1e-9 for p in PROBABILITIES):
        raise ValueError(text)
    return value


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with all subcommands."""
    parser = argparse.ArgumentParser(
        prog="socialtrust",
        description="Derive contact trust from phone logs and simulate pairwise trust",
    )
    parser.add_argument("--version", "-V", action="version", version=f"socialtrust {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose output")
    parser.add_argument("--quiet", "-q", action="store_true", help="Suppress non-error output")
    parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    parser.add_argument(
        "--format",
        choices=["csv", "json"],
        default="csv",
        help="Format of tabular reports (default: csv)",
    )
    parser.add_argument("--config", help="Engine configuration YAML file")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    rating_choices = [kind.value for kind in RatingKind]

    ingest_parser = subparsers.add_parser(
        "ingest", help="Parse survey results, drop double submissions and filter logs"
    )
    ingest_parser.add_argument(
        "--in", dest="inputs", nargs="+", required=True, help="Survey YAML files or directories"
    )
    ingest_parser.add_argument(
        "--policy", default="default", help="'default' or a YAML file with filter thresholds"
    )
    ingest_parser.add_argument("--out", required=True, help="Kept logs (line-delimited JSON)")
    ingest_parser.add_argument("--report", help="Exclusion report (default: next to --out)")
    ingest_parser.add_argument(
        "--no-dedupe", action="store_true", help="Keep double submissions of a worker"
    )

    features_parser = subparsers.add_parser("features", help="Compute per-partner indicators")
    features_parser.add_argument("--in", dest="inputs", required=True, help="Logs JSONL file")
    features_parser.add_argument("--out", required=True, help="Features CSV")

    calibrate_parser = subparsers.add_parser(
        "calibrate", help="Compute the quantile table of the reference rating level"
    )
    calibrate_parser.add_argument("--features", required=True, help="Features CSV")
    calibrate_parser.add_argument(
        "--level", type=int, choices=LIKERT_LEVELS, default=1, help="Reference level (default: 1)"
    )
    calibrate_parser.add_argument("--rating", choices=rating_choices, help="Reference statement")
    calibrate_parser.add_argument(
        "--mode", choices=[m.value for m in QuantileMode], help="Calibration mode"
    )
    calibrate_parser.add_argument("--out", required=True, help="Quantile table JSON")

    predict_parser = subparsers.add_parser("predict", help="Grade every partner of a features file")
    predict_parser.add_argument("--features", required=True, help="Features CSV")
    predict_parser.add_argument("--table", help="Quantile table JSON (default: published table)")
    predict_parser.add_argument(
        "--combinator", type=parse_combinator, default=OrAny(), help="'or' or 'and:<var>,<var>'"
    )
    predict_parser.add_argument(
        "--favorites-only", action="store_true", help="Only favorites can be trusted"
    )
    predict_parser.add_argument("--out", required=True, help="Predictions file")

    evaluate_parser = subparsers.add_parser(
        "evaluate", help="Rating distribution of partners satisfying a rule"
    )
    evaluate_parser.add_argument("--features", required=True, help="Features CSV")
    evaluate_parser.add_argument("--table", help="Quantile table JSON (default: published table)")
    evaluate_parser.add_argument(
        "--prob", type=_probability, default=0.95, help="Quantile band (default: 0.95)"
    )
    evaluate_parser.add_argument(
        "--combinator", type=parse_combinator, default=OrAny(), help="'or' or 'and:<var>,<var>'"
    )
    evaluate_parser.add_argument(
        "--favorites-only", action="store_true", help="Only favorites satisfy the rule"
    )
    evaluate_parser.add_argument("--rating", choices=rating_choices, help="Evaluated statement")
    evaluate_parser.add_argument(
        "--favorites", action="store_true", help="Also report the favorites table"
    )
    evaluate_parser.add_argument(
        "--rank-pairs", action="store_true", help="Also rank every AND pair of variables"
    )
    evaluate_parser.add_argument("--out", help="Evaluation JSON")

    stats_parser = subparsers.add_parser("stats", help="Rating correlations and class histograms")
    stats_parser.add_argument("--features", required=True, help="Features CSV")
    stats_parser.add_argument("--logs", help="Logs JSONL for the corpus summary")
    stats_parser.add_argument(
        "--method", choices=[m.value for m in CorrelationMethod], default="pearson"
    )
    stats_parser.add_argument("--out", required=True, help="Statistics JSON")
    stats_parser.add_argument("--histograms", help="Per-class rating histograms")

    compare_parser = subparsers.add_parser(
        "compare", help="Mean error of the activity-based closeness classifier"
    )
    compare_parser.add_argument("--features", required=True, help="Features CSV")
    compare_parser.add_argument("--scheme", choices=sorted(SCHEMES), default="A")
    compare_parser.add_argument(
        "--include-messages", action="store_true", help="Count messages as activity"
    )
    compare_parser.add_argument("--cutoffs", type=Cutoffs.parse, help="low,high")
    compare_parser.add_argument(
        "--mode", choices=[m.value for m in ErrorMode], default=ErrorMode.UNDERESTIMATION.value
    )
    compare_parser.add_argument(
        "--pooled", action="store_true", help="Pool partners instead of averaging participants"
    )
    compare_parser.add_argument("--rating", choices=rating_choices, help="Binned statement")
    compare_parser.add_argument("--out", help="Per-participant error report")

    simulate_parser = subparsers.add_parser(
        "simulate", help="Run pairwise trust establishment over a synthetic population"
    )
    simulate_parser.add_argument("--devices", type=int, default=10, help="Number of devices")
    simulate_parser.add_argument(
        "--seed",
        type=int,
        default=argparse.SUPPRESS,
        help="Random seed (overrides the global flag)",
    )
    simulate_parser.add_argument(
        "--pairs", default="mesh", help="'mesh', 'random:N' or a plan file of 'a,b' lines"
    )
    simulate_parser.add_argument("--loss", type=float, default=0.0, help="Message drop probability")
    simulate_parser.add_argument("--max-retries", type=int, default=3)
    simulate_parser.add_argument("--span-mean", type=float, default=90.0, help="Mean log span")
    simulate_parser.add_argument(
        "--span-distribution",
        choices=[d.value for d in SpanDistribution],
        default=SpanDistribution.LOGNORMAL.value,
    )
    simulate_parser.add_argument("--coupling", type=float, default=0.6, help="Trust coupling")
    simulate_parser.add_argument("--degenerate-fraction", type=float, default=0.0)
    simulate_parser.add_argument("--table", help="Quantile table JSON (default: published table)")
    simulate_parser.add_argument(
        "--combinator", type=parse_combinator, default=OrAny(), help="'or' or 'and:<var>,<var>'"
    )
    simulate_parser.add_argument(
        "--tolerate-failures", action="store_true", help="Report failed pairs instead of stopping"
    )
    simulate_parser.add_argument("--population", help="Write generated logs as JSONL")
    simulate_parser.add_argument("--summary", help="Write aggregate statistics as JSON")
    simulate_parser.add_argument("--out", required=True, help="Scenario report")

    return parser


COMMANDS = {
    "ingest": ingest_command,
    "features": features_command,
    "calibrate": calibrate_command,
    "predict": predict_command,
    "evaluate": evaluate_command,
    "stats": stats_command,
    "compare": compare_command,
    "simulate": simulate_command,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point for socialtrust CLI.

    Args:
        argv: Arguments without the program name (default: ``sys.argv[1:]``)

    Returns:
        Exit code: 0 success, 1 data error, 2 usage error, 130 interrupted
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    setup_logging(verbose=args.verbose, quiet=args.quiet)
    if args.verbose:
        logger.debug(f"Arguments: {args}")

    handler = COMMANDS.get(args.command or "")
    if handler is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return handler(args)
    except (Exception, KeyboardInterrupt) as e:
        return handle_global_error(e)


if __name__ == "__main__":
    sys.exit(main())
