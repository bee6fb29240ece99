# /usr/bin/env python
""" Command line interface for imbalance_forecast. """
import argparse
import collections
import logging
import sys

import pandas as pd

from imbalance_forecast import (
    backtest,
    config,
    dataio,
    evaluation,
    exceptions,
    features,
    logs,
    parser,
    tuning,
    utils,
)

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def main() -> int:
    """
    The main function that runs the imbalance_forecast command line interface.

    Returns:
        int: 0 on success, 1 on a runtime failure and 2 on invalid arguments
            or configuration.
    """
    logger.debug("Parsing command line arguments...")
    args = parser.get_parser().parse_args()

    logs.set_verbosity(args.verbose)

    try:
        run_config = _run_config(args)
        _raise_invalid_input(args, run_config)
        return COMMANDS[args.command](args, run_config)
    except exceptions.ConfigError:
        return EXIT_INVALID
    except exceptions.BaseLoggingError:
        return EXIT_FAILURE


def _run_config(args: argparse.Namespace) -> config.RunConfig:
    """Reads the configuration file and applies the command line flags."""
    run_config = config.load_config(args.config)
    return config.with_overrides(
        run_config,
        seed=args.seed,
        jobs=args.jobs,
        models=args.models,
        quarter_hours=args.quarter_hours,
        days=getattr(args, "days", None),
    )


def _raise_invalid_input(args: argparse.Namespace, run_config: config.RunConfig) -> None:
    """
    Check if the input arguments are valid.

    Args:
        args: The parsed command-line arguments.
        run_config: The effective configuration.

    Raises:
        InputError: If synthetic data would overwrite existing files without --force.
        MissingArtifactError: If an input file of the command does not exist.
    """
    paths = run_config.paths
    if args.command == "synth":
        existing = [path for path in (paths.panel, paths.transactions) if path.exists()]
        if existing and not args.force:
            raise exceptions.InputError(
                f"Output files {[str(path) for path in existing]} already exist. "
                "Use --force to overwrite."
            )
        return

    required = {
        "features": (paths.panel, paths.transactions),
        "tune": (paths.panel, paths.transactions),
        "backtest": (paths.panel, paths.transactions),
        "evaluate": (paths.store, paths.panel),
        "dm-test": (paths.store, paths.panel),
        "report": (paths.reports / "summary.md",),
    }[args.command]
    absent = [str(path) for path in required if not path.exists()]
    if absent:
        raise exceptions.MissingArtifactError(f"Input files not found: {absent}.")


def command_synth(args: argparse.Namespace, run_config: config.RunConfig) -> int:
    """Writes a synthetic panel and its transactions."""
    logger.info("Generating %d synthetic days.", run_config.synth.n_days)
    panel, transactions = dataio.generate_synthetic(run_config.synth)
    for path in (run_config.paths.panel, run_config.paths.transactions):
        path.parent.mkdir(parents=True, exist_ok=True)
    dataio.save_panel(panel, run_config.paths.panel)
    dataio.save_transactions(transactions, run_config.paths.transactions)
    logger.info(
        "Saved %d panel rows to %s and %d transactions to %s.",
        len(panel.frame),
        run_config.paths.panel,
        len(transactions),
        run_config.paths.transactions,
    )
    return EXIT_SUCCESS


def command_features(args: argparse.Namespace, run_config: config.RunConfig) -> int:
    """Exports the feature matrix of every panel day with a previous day."""
    panel, book = _load_market(run_config)
    table = backtest.feature_table(panel, book, run_config.rolling.quarter_hours)
    output = run_config.paths.features
    output.parent.mkdir(parents=True, exist_ok=True)
    logger.info("Saving %d feature vectors to %s.", len(table), output)
    utils.save(table, output)
    return EXIT_SUCCESS


def command_tune(args: argparse.Namespace, run_config: config.RunConfig) -> int:
    """Tunes every requested gamlss and probNN model per quarter-hour."""
    targets = [
        model_id for model_id in run_config.rolling.models if model_id in backtest.TUNED_MODELS
    ]
    if not targets:
        logger.warning("None of the requested models has hyperparameters to tune.")
        return EXIT_SUCCESS
    panel, book = _load_market(run_config)
    paths = run_config.paths
    tuned = tuning.load_tuned(paths.tuned) if paths.tuned.exists() else {}
    paths.records.mkdir(parents=True, exist_ok=True)

    for qh in run_config.rolling.quarter_hours:
        train, val = backtest.initial_partitions(panel, book, run_config.rolling, qh)
        for model_id in targets:
            logger.info("Tuning %s for quarter-hour %d.", model_id, qh)
            result = tuning.tune(
                tuning.space_for(model_id),
                tuning.model_objective(model_id, train, val, run_config.rolling.training),
                run_config.tuning.trials_for(model_id),
                run_config.seed + qh,
                records_path=paths.records / f"{model_id}_qh{qh:02d}.jsonl",
                jobs=run_config.jobs,
            )
            tuned.setdefault(model_id, {})[qh] = result.best_params

    paths.tuned.parent.mkdir(parents=True, exist_ok=True)
    tuning.save_tuned(tuned, paths.tuned)
    logger.info("Saved tuned hyperparameters to %s.", paths.tuned)
    return EXIT_SUCCESS


def command_backtest(args: argparse.Namespace, run_config: config.RunConfig) -> int:
    """Runs the rolling backtest and saves the forecast store."""
    tuned = None
    if any(model_id in backtest.TUNED_MODELS for model_id in run_config.rolling.models):
        tuned = tuning.load_tuned(run_config.paths.tuned)
    panel, book = _load_market(run_config)
    store = backtest.rolling_backtest(panel, book, run_config.rolling, tuned, run_config.jobs)

    output = run_config.paths.store
    output.parent.mkdir(parents=True, exist_ok=True)
    backtest.save_store(store, output, run_config.rolling, append=args.append)
    logger.info("Saved %d forecasts to %s.", len(store), output)
    if store.failures:
        counts = collections.Counter(failure.model_id for failure in store.failures)
        for model_id, count in sorted(counts.items()):
            logger.warning("%s: %d failed fits or forecasts.", model_id, count)
        utils.save_json(
            [
                {
                    "model_id": failure.model_id,
                    "date": failure.delivery.day.isoformat(),
                    "qh": failure.delivery.qh,
                    "stage": failure.stage,
                    "error": failure.error,
                }
                for failure in store.failures
            ],
            output.with_name(f"{output.stem}_failures.json"),
        )
    if not len(store):
        logger.error("The backtest produced no forecasts.")
        return EXIT_FAILURE
    return EXIT_SUCCESS


def command_evaluate(args: argparse.Namespace, run_config: config.RunConfig) -> int:
    """Scores the forecast store and writes the report."""
    table, dm = _scores(run_config)
    evaluation.emit_report(table, dm, run_config.paths.reports, json_twins=args.json)
    return EXIT_SUCCESS


def command_dm_test(args: argparse.Namespace, run_config: config.RunConfig) -> int:
    """Writes only the Diebold-Mariano p-value matrix."""
    _, dm = _scores(run_config)
    if dm is None:
        return EXIT_FAILURE
    reports = run_config.paths.reports
    reports.mkdir(parents=True, exist_ok=True)
    frame = dm.reset_index()
    frame.to_csv(
        reports / "dm_pvalues.csv",
        index=False,
        float_format=evaluation.SIGNIFICANT_FORMAT,
        lineterminator="\n",
    )
    if args.json:
        utils.save_json(utils.frame_to_records(frame), reports / "dm_pvalues.json")
    logger.info("Diebold-Mariano p-values:\n%s", dm.to_string())
    return EXIT_SUCCESS


def command_report(args: argparse.Namespace, run_config: config.RunConfig) -> int:
    """Prints the markdown summary of the last evaluation."""
    summary = run_config.paths.reports / "summary.md"
    sys.stdout.write(summary.read_text(encoding="utf-8"))
    return EXIT_SUCCESS


def _scores(
    run_config: config.RunConfig,
) -> tuple[evaluation.ScoreTable, pd.DataFrame | None]:
    """Scores the store, adding the combination of naive and gamlss.t when both exist."""
    store = backtest.load_store(run_config.paths.store)
    panel, _ = dataio.load_panel(run_config.paths.panel)
    records = list(store)
    if {"naive", "gamlss.t"} <= set(store.model_ids):
        records.extend(evaluation.combination_records(store, "naive", "gamlss.t"))
    table = evaluation.score_table(records, panel)
    if len(table.daily_losses) < 2:
        logger.warning("Only one model in the store; the Diebold-Mariano matrix is omitted.")
        return table, None
    return table, evaluation.dm_matrix(table.daily_losses)


def _load_market(
    run_config: config.RunConfig,
) -> tuple[dataio.MarketPanel, features.TransactionBook]:
    """Loads and cleans the panel and indexes the transactions."""
    panel, _ = dataio.load_panel(run_config.paths.panel)
    panel, records = dataio.clean_panel(panel, dataio.CleaningPolicy(run_config.max_gap))
    if records:
        dataio.save_cleaning_report(
            records, run_config.paths.panel.with_name("cleaning_report.json")
        )
    transactions = dataio.load_transactions(run_config.paths.transactions)
    logger.debug("Indexing %d transactions.", len(transactions))
    return panel, features.TransactionBook(transactions)


COMMANDS = {
    "synth": command_synth,
    "features": command_features,
    "tune": command_tune,
    "backtest": command_backtest,
    "evaluate": command_evaluate,
    "dm-test": command_dm_test,
    "report": command_report,
}


if __name__ == "__main__":
    sys.exit(main())
