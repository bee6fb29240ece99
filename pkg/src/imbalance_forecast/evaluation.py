""" Forecast scoring, Diebold-Mariano comparisons and reports.

CRPS is approximated by the mean pinball loss over the 99 grid
probabilities. Coverage counts truths strictly inside the central interval
of the forecast quantiles.
"""
from __future__ import annotations

import dataclasses
import logging
import pathlib
from collections import abc

import numpy as np
import pandas as pd
from scipy import special

from imbalance_forecast import backtest, dataio, exceptions, logs, models, utils

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

COVERAGE_LEVELS = {
    "50%-cov": (0.25, 0.75),
    "90%-cov": (0.05, 0.95),
    "98%-cov": (0.01, 0.99),
}
TABLE_COLUMNS = ("CRPS", "MAE", "RMSE", *COVERAGE_LEVELS)
MIN_DM_DAYS = 30
BASELINE = "naive"
SIGNIFICANT_FORMAT = "%.6g"


def pinball(
    y: np.ndarray | float, q: np.ndarray | float, prob: np.ndarray | float
) -> np.ndarray:
    """(prob - 1{y < q}) * (y - q)."""
    prob = np.asarray(prob, dtype=np.float64)
    if ((prob <= 0) | (prob >= 1)).any():
        raise exceptions.DomainError("Pinball probabilities must lie in (0, 1).")
    y = np.asarray(y, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return (prob - (y < q)) * (y - q)


def crps(y: float, forecast: models.QuantileForecast) -> float:
    """Mean pinball loss over the probability grid."""
    return float(pinball(y, forecast.values, models.PROBS).mean())


@dataclasses.dataclass
class ScoreTable:
    """Aggregated scores.

    Attributes:
        summary: One row per model with CRPS, MAE, RMSE and the coverages,
            plus the record count and the number of heavy-tail flags.
        crps_by_qh: CRPS per model (columns) and quarter-hour (rows).
        pinball_curve: Mean pinball loss per model (columns) and probability (rows).
        daily_losses: Per model, the CRPS of every record by date (rows) and
            quarter-hour (columns).
    """

    summary: pd.DataFrame
    crps_by_qh: pd.DataFrame
    pinball_curve: pd.DataFrame
    daily_losses: dict[str, pd.DataFrame]


def model_order(model_ids: abc.Iterable[str]) -> list[str]:
    """Known models in their canonical order, then the combination, then others."""
    model_ids = set(model_ids)
    known = [model_id for model_id in models.MODEL_IDS if model_id in model_ids]
    tail = [models.COMBINATION_ID] if models.COMBINATION_ID in model_ids else []
    rest = sorted(model_ids - set(known) - set(tail))
    return known + tail + rest


def combination_records(
    store: backtest.ForecastStore, first: str = "naive", second: str = "gamlss.t"
) -> list[backtest.ForecastRecord]:
    """Quantile-averaged forecasts of two models on their common deliveries."""
    out = []
    for record in store:
        if record.model_id != first or (second, record.delivery) not in store:
            continue
        other = store.get(second, record.delivery)
        out.append(
            backtest.ForecastRecord(
                models.COMBINATION_ID,
                record.delivery,
                models.combine(record.forecast, other.forecast),
                (record.mu_hat + other.mu_hat) / 2.0,
                max(record.fit_date, other.fit_date),
                max(record.window_id, other.window_id),
                record.heavy_tail_flag or other.heavy_tail_flag,
            )
        )
    return out


def score_table(
    records: abc.Iterable[backtest.ForecastRecord], truths: dataio.MarketPanel
) -> ScoreTable:
    """Scores forecasts against the panel's imbalance prices.

    Raises:
        InputError: If a forecast has no observed truth; the message lists
            the deliveries.
    """
    price = truths.matrix("IP")
    rows = []
    curves: dict[str, list[np.ndarray]] = {}
    missing = []
    for record in records:
        delivery = record.delivery
        if not truths.has_day(delivery.day):
            missing.append(delivery)
            continue
        y = float(price[truths.position(delivery.day), delivery.qh - 1])
        if not np.isfinite(y):
            missing.append(delivery)
            continue
        losses = pinball(y, record.forecast.values, models.PROBS)
        curves.setdefault(record.model_id, []).append(losses)
        row = {
            "model_id": record.model_id,
            "date": delivery.day,
            "qh": delivery.qh,
            "CRPS": float(losses.mean()),
            "AE": abs(y - record.forecast.at(0.5)),
            "SE": (y - record.mu_hat) ** 2,
            "heavy_tail": record.heavy_tail_flag,
        }
        for name, (low, high) in COVERAGE_LEVELS.items():
            row[name] = float(record.forecast.at(low) < y < record.forecast.at(high))
        rows.append(row)
    if missing:
        listed = ", ".join(f"{d.day} qh {d.qh}" for d in sorted(set(missing))[:10])
        raise exceptions.InputError(
            f"{len(missing)} forecasts have no observed imbalance price: {listed}."
        )
    if not rows:
        raise exceptions.InputError("There are no forecasts to score.")

    frame = pd.DataFrame(rows)
    order = model_order(frame["model_id"].unique())
    grouped = frame.groupby("model_id")
    summary = pd.DataFrame(
        {
            "CRPS": grouped["CRPS"].mean(),
            "MAE": grouped["AE"].mean(),
            "RMSE": np.sqrt(grouped["SE"].mean()),
            **{name: grouped[name].mean() for name in COVERAGE_LEVELS},
            "n": grouped.size(),
            "heavy_tail_flags": grouped["heavy_tail"].sum().astype(np.int64),
        }
    ).loc[order]
    summary.index.name = "model_id"

    crps_by_qh = frame.pivot_table(index="qh", columns="model_id", values="CRPS", aggfunc="mean")
    crps_by_qh = crps_by_qh.loc[:, order]
    pinball_curve = pd.DataFrame(
        {model_id: np.mean(curves[model_id], axis=0) for model_id in order},
        index=pd.Index(models.PROBS, name="prob"),
    )
    daily_losses = {
        model_id: frame.loc[frame["model_id"] == model_id].pivot(
            index="date", columns="qh", values="CRPS"
        )
        for model_id in order
    }
    return ScoreTable(summary, crps_by_qh, pinball_curve, daily_losses)


@dataclasses.dataclass(frozen=True)
class DMResult:
    """Two one-sided Diebold-Mariano tests on the same statistic.

    Attributes:
        model_a: The first model.
        model_b: The second model.
        statistic: mean(delta) / (sd(delta) / sqrt(n)), delta = loss A - loss B.
        p_value_a_better: p-value against the alternative that A has lower loss.
        p_value_b_better: p-value against the alternative that B has lower loss.
        mean_difference: Mean daily loss differential.
        n_days: Number of days compared.
        degenerate: True if the differential has zero variance but nonzero mean.
    """

    model_a: str
    model_b: str
    statistic: float
    p_value_a_better: float
    p_value_b_better: float
    mean_difference: float
    n_days: int
    degenerate: bool = False


def dm_test(
    losses_a: np.ndarray,
    losses_b: np.ndarray,
    model_a: str = "A",
    model_b: str = "B",
) -> DMResult:
    """Compares daily loss vectors summed over quarter-hours.

    Args:
        losses_a: Days-by-quarter-hours losses of model A.
        losses_b: Losses of model B on the same days and quarter-hours.
        model_a: Name of model A.
        model_b: Name of model B.

    Raises:
        InputError: If shapes differ or fewer than 30 days are given.
    """
    losses_a = np.atleast_2d(np.asarray(losses_a, dtype=np.float64))
    losses_b = np.atleast_2d(np.asarray(losses_b, dtype=np.float64))
    if losses_a.shape != losses_b.shape:
        raise exceptions.InputError("Loss arrays of both models must have the same shape.")
    n_days = losses_a.shape[0]
    if n_days < MIN_DM_DAYS:
        raise exceptions.InputError(
            f"The Diebold-Mariano test needs {MIN_DM_DAYS} days, got {n_days}."
        )
    delta = np.abs(losses_a).sum(axis=1) - np.abs(losses_b).sum(axis=1)
    mean = float(delta.mean())
    spread = float(delta.std(ddof=1))
    degenerate = False
    if spread > 0:
        statistic = mean / (spread / np.sqrt(n_days))
    elif mean == 0:
        statistic = 0.0
    else:
        statistic = float(np.copysign(np.inf, mean))
        degenerate = True
        logger.warning("Loss differential of %s and %s has zero variance.", model_a, model_b)
    return DMResult(
        model_a,
        model_b,
        float(statistic),
        float(special.ndtr(statistic)),
        float(special.ndtr(-statistic)),
        mean,
        n_days,
        degenerate,
    )


def dm_matrix(daily_losses: dict[str, pd.DataFrame]) -> pd.DataFrame:
    """p-values of every ordered pair.

    Entry [B, A] is the p-value of the test whose alternative is that A
    (column) has lower loss than B (row); the diagonal is 0.5. Pairs are
    compared on the days and quarter-hours both models cover; pairs with
    fewer than 30 common days are NaN.
    """
    names = list(daily_losses)
    matrix = pd.DataFrame(0.5, index=pd.Index(names, name="row"), columns=names)
    for row in names:
        for column in names:
            if row == column:
                continue
            first, second = daily_losses[column], daily_losses[row]
            common_qh = first.columns.intersection(second.columns)
            joined = first.loc[:, common_qh].join(
                second.loc[:, common_qh], how="inner", lsuffix="_a", rsuffix="_b"
            ).dropna()
            if len(joined) < MIN_DM_DAYS:
                logger.warning(
                    "Only %d common days for %s and %s; skipping the test.",
                    len(joined),
                    column,
                    row,
                )
                matrix.loc[row, column] = np.nan
                continue
            width = len(common_qh)
            result = dm_test(
                joined.iloc[:, :width].to_numpy(), joined.iloc[:, width:].to_numpy(), column, row
            )
            matrix.loc[row, column] = result.p_value_a_better
    return matrix


def emit_report(
    table: ScoreTable,
    dm: pd.DataFrame | None,
    out_dir: str | pathlib.Path,
    json_twins: bool = False,
) -> list[pathlib.Path]:
    """Writes the report files.

    Files: summary.md, scores.csv, pinball.csv (99 rows per model),
    crps_by_qh.csv and, when given, dm_pvalues.csv. Floats carry 6
    significant digits.

    Returns:
        The written paths.
    """
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = {
        "scores": _rounded(table.summary.reset_index()),
        "pinball": _rounded(_long_with_ratio(table.pinball_curve, "prob", "pinball")),
        "crps_by_qh": _rounded(_long_with_ratio(table.crps_by_qh, "qh", "crps")),
    }
    if dm is not None:
        tables["dm_pvalues"] = _rounded(dm.reset_index())

    written = []
    for name, frame in tables.items():
        path = out_dir / f"{name}.csv"
        frame.to_csv(path, index=False, float_format=SIGNIFICANT_FORMAT, lineterminator="\n")
        written.append(path)
        if json_twins:
            json_path = path.with_suffix(".json")
            utils.save_json(utils.frame_to_records(frame), json_path)
            written.append(json_path)

    summary_path = out_dir / "summary.md"
    summary_path.write_text(_markdown_summary(table, dm), encoding="utf-8")
    written.append(summary_path)
    logger.info("Wrote %d report files to %s.", len(written), out_dir)
    return written


def _long_with_ratio(wide: pd.DataFrame, key: str, value: str) -> pd.DataFrame:
    """Long table of a per-model measure and its ratio to the naive model."""
    frames = []
    for model_id in wide.columns:
        part = pd.DataFrame(
            {"model_id": model_id, key: wide.index, value: wide[model_id].to_numpy()}
        )
        if BASELINE in wide.columns:
            part[f"ratio_to_{BASELINE}"] = wide[model_id].to_numpy() / wide[BASELINE].to_numpy()
        frames.append(part)
    return pd.concat(frames, ignore_index=True)


def _rounded(frame: pd.DataFrame) -> pd.DataFrame:
    out = frame.copy()
    for column in out.columns:
        if pd.api.types.is_float_dtype(out[column]):
            out[column] = [
                value if not np.isfinite(value) else float(SIGNIFICANT_FORMAT % value)
                for value in out[column]
            ]
    return out


def _markdown_summary(table: ScoreTable, dm: pd.DataFrame | None) -> str:
    header = ["model", *TABLE_COLUMNS]
    lines = [
        "# Forecast evaluation",
        "",
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for model_id, row in table.summary.iterrows():
        cells = [SIGNIFICANT_FORMAT % row[name] for name in TABLE_COLUMNS]
        lines.append("| " + " | ".join([str(model_id), *cells]) + " |")
    flagged = table.summary["heavy_tail_flags"]
    if flagged.sum() > 0:
        lines += [
            "",
            "RMSE uses the location of forecasts with tail weight <= 1: "
            + ", ".join(f"{model_id} ({count})" for model_id, count in flagged.items() if count),
        ]
    lines += ["", f"Records scored: {int(table.summary['n'].sum())}."]
    if dm is None:
        lines += ["", "Diebold-Mariano comparison omitted."]
    else:
        lines += [
            "",
            "Diebold-Mariano p-values: entry [row, column] tests whether the column "
            "model has lower loss than the row model.",
        ]
    return "\n".join(lines) + "\n"
