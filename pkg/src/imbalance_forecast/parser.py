"""The parser module for the imbalance_forecast CLI."""
import argparse
import pathlib

from imbalance_forecast import models

COMMANDS = ("synth", "features", "tune", "backtest", "evaluate", "dm-test", "report")


def get_parser() -> argparse.ArgumentParser:
    """
    Returns an ArgumentParser with the command line arguments of the imbalance_forecast CLI.

    Returns:
        argparse.ArgumentParser: An ArgumentParser object with the command line arguments.

    Notes:
        Every subcommand accepts the shared configuration arguments. Flags that
        are not given default to None so that values from the configuration
        file remain in effect.
    """
    parser = argparse.ArgumentParser(
        prog="imbalance_forecast",
        description="""Probabilistic forecasting of German imbalance prices
        30 minutes before delivery. Generates or loads market data, tunes and
        backtests the forecasting models and scores their forecasts.""",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    common = _common_parser()
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")

    synth = subparsers.add_parser(
        "synth",
        parents=[common],
        help="Generate a synthetic market panel and transactions.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    synth.add_argument(
        "--days",
        required=False,
        default=None,
        type=_is_positive_integer,
        help="Number of days to generate.",
    )
    synth.add_argument(
        "--force",
        required=False,
        action="store_true",
        help="Overwrite existing panel and transaction files.",
    )

    subparsers.add_parser(
        "features",
        parents=[common],
        help="Export the feature matrix of the configured quarter-hours.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subparsers.add_parser(
        "tune",
        parents=[common],
        help="Tune gamlss and probNN hyperparameters on the first in-sample window.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    backtest = subparsers.add_parser(
        "backtest",
        parents=[common],
        help="Run the rolling-window backtest and write the forecast store.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    backtest.add_argument(
        "--append",
        required=False,
        action="store_true",
        help="Add new forecasts to an existing store instead of replacing it.",
    )

    for name, description in (
        ("evaluate", "Score the forecast store and write the report files."),
        ("dm-test", "Write the Diebold-Mariano p-value matrix of the forecast store."),
        ("report", "Print the summary of the last evaluation."),
    ):
        subparsers.add_parser(
            name,
            parents=[common],
            help=description,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )

    return parser


def _common_parser() -> argparse.ArgumentParser:
    """Arguments shared by all subcommands."""
    common = argparse.ArgumentParser(add_help=False)
    config_group = common.add_argument_group("Configuration arguments")
    other_group = common.add_argument_group("Other arguments")

    config_group.add_argument(
        "--config",
        required=False,
        default=None,
        type=_path_exists,
        help="TOML configuration file.",
    )
    config_group.add_argument(
        "--seed",
        required=False,
        default=None,
        type=_is_non_negative_integer,
        help="Seed of every random stream; overrides the configuration file.",
    )
    config_group.add_argument(
        "--jobs",
        required=False,
        default=None,
        type=_is_positive_integer,
        help="Maximum number of workers.",
    )
    config_group.add_argument(
        "--models",
        required=False,
        default=None,
        type=_model_ids,
        help=f"Comma-separated model ids out of {','.join(models.MODEL_IDS)}.",
    )
    config_group.add_argument(
        "--qh",
        required=False,
        default=None,
        type=_quarter_hours,
        dest="quarter_hours",
        help="Comma-separated quarter-hours in [1, 96].",
    )
    other_group.add_argument(
        "--json",
        required=False,
        action="store_true",
        help="Also write every report table as JSON.",
    )
    other_group.add_argument(
        "--verbose",
        required=False,
        default="info",
        type=str,
        help="Verbosity level.",
        choices=["debug", "info", "warning", "error", "critical"],
    )
    return common


def _path_exists(path_str: str) -> pathlib.Path:
    """Checks if an argument is an existing path.

    Args:
        path_str: The path to check.

    Returns:
        pathlib.Path: The path as a pathlib.Path if it exists.
    """
    path = pathlib.Path(path_str)
    if path.exists():
        return path
    raise argparse.ArgumentTypeError(f"{path} does not exist.")


def _is_positive_integer(value: str) -> int:
    """Checks if an argument is an integer greater than 0.

    Args:
        value: The argument to check.

    Returns:
        int: The argument as an integer if it is greater than 0.
    """
    if value.isdigit() and int(value) > 0:
        return int(value)
    raise argparse.ArgumentTypeError("Argument is not a positive integer.")


def _is_non_negative_integer(value: str) -> int:
    if value.isdigit():
        return int(value)
    raise argparse.ArgumentTypeError("Argument is not a non-negative integer.")


def _quarter_hours(value: str) -> tuple[int, ...]:
    """Parses a comma-separated list of unique quarter-hours.

    Args:
        value: The argument to check, e.g. "1,25,49,73".

    Returns:
        tuple[int, ...]: The quarter-hours.
    """
    parts = [part.strip() for part in value.split(",") if part.strip()]
    if not parts or not all(part.isdigit() and 1 <= int(part) <= 96 for part in parts):
        raise argparse.ArgumentTypeError(f"{value} is not a list of quarter-hours in [1, 96].")
    quarter_hours = tuple(int(part) for part in parts)
    if len(set(quarter_hours)) != len(quarter_hours):
        raise argparse.ArgumentTypeError(f"{value} repeats a quarter-hour.")
    return quarter_hours


def _model_ids(value: str) -> tuple[str, ...]:
    """Parses a comma-separated list of model ids.

    Args:
        value: The argument to check, e.g. "naive,lasso".

    Returns:
        tuple[str, ...]: The model ids in the given order.
    """
    ids = tuple(part.strip() for part in value.split(",") if part.strip())
    unknown = [model_id for model_id in ids if model_id not in models.MODEL_IDS]
    if not ids or unknown:
        raise argparse.ArgumentTypeError(
            f"Unknown models {unknown}; choose from {','.join(models.MODEL_IDS)}."
        )
    return ids
