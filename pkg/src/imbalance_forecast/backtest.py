""" Rolling-window estimation and out-of-sample forecasting.

For every out-of-sample day t and quarter-hour qh, each model is estimated
on the D days before t and forecasts the imbalance price of (t, qh) from the
features observed 30 minutes before delivery. Models are estimated per
quarter-hour.
"""
from __future__ import annotations

import dataclasses
import datetime
import importlib.metadata
import logging
import pathlib
from collections import abc
from concurrent import futures
from typing import Any

import numpy as np
import pandas as pd

from imbalance_forecast import dataio, dists, exceptions, features, logs, models, utils

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

STORE_SCHEMA_VERSION = 1
DEFAULT_QUARTER_HOURS = (1, 2, 3, 4, 25, 26, 27, 28, 49, 50, 51, 52, 73, 74, 75, 76)
QUANTILE_COLUMNS = tuple(f"q{round(prob * 100):02d}" for prob in models.PROBS)
STORE_COLUMNS = (
    ("model_id", "date", "qh", "mu_hat")
    + QUANTILE_COLUMNS
    + ("fit_date", "window_id", "heavy_tail_flag")
)
TUNED_MODELS = ("gamlss.N", "gamlss.t", "probNN.N", "probNN.t")


@dataclasses.dataclass(frozen=True)
class RollingConfig:
    """Rolling-window settings.

    Attributes:
        in_sample_days: D, the estimation window length in days.
        out_of_sample_days: N, the number of forecast days.
        train_days: Leading window days used for likelihood training.
        val_days: Trailing window days used for early stopping.
        quarter_hours: Forecast quarter-hours.
        n_bootstrap: Bootstrap draws for the naive and lasso models.
        refit_every: Days between re-estimations.
        models: Model ids to run.
        seed: Base seed of every random stream.
        max_epochs: Epoch limit of likelihood training.
        patience: Early stopping patience.
        batch_size: Minibatch size of the network.
    """

    in_sample_days: int = 730
    out_of_sample_days: int = 539
    train_days: int = 547
    val_days: int = 183
    quarter_hours: tuple[int, ...] = DEFAULT_QUARTER_HOURS
    n_bootstrap: int = 10000
    refit_every: int = 1
    models: tuple[str, ...] = models.MODEL_IDS
    seed: int = 1
    max_epochs: int = 1500
    patience: int = 50
    batch_size: int = 32

    def __post_init__(self) -> None:
        object.__setattr__(self, "quarter_hours", tuple(int(qh) for qh in self.quarter_hours))
        object.__setattr__(self, "models", tuple(self.models))
        if self.train_days < 1 or self.val_days < 1:
            raise exceptions.ConfigError("Training and validation need at least one day each.")
        if self.train_days + self.val_days != self.in_sample_days:
            raise exceptions.ConfigError(
                f"train_days ({self.train_days}) + val_days ({self.val_days}) must equal "
                f"in_sample_days ({self.in_sample_days})."
            )
        if self.out_of_sample_days < 1:
            raise exceptions.ConfigError("At least one out-of-sample day is required.")
        if self.refit_every < 1:
            raise exceptions.ConfigError("refit_every must be at least 1.")
        if not self.quarter_hours or not all(
            1 <= qh <= dataio.QH_PER_DAY for qh in self.quarter_hours
        ):
            raise exceptions.ConfigError("Quarter-hours must lie in [1, 96].")
        if len(set(self.quarter_hours)) != len(self.quarter_hours):
            raise exceptions.ConfigError("Quarter-hours must be unique.")
        unknown = set(self.models) - set(models.MODEL_IDS)
        if unknown or not self.models:
            raise exceptions.ConfigError(
                f"Unknown models {sorted(unknown)}; choose from {', '.join(models.MODEL_IDS)}."
            )
        if self.n_bootstrap < models.N_PROBS:
            raise exceptions.ConfigError(
                f"At least {models.N_PROBS} bootstrap samples are required."
            )
        if self.max_epochs < 1 or self.patience < 0 or self.batch_size < 1:
            raise exceptions.ConfigError("Invalid training limits.")

    @property
    def training(self) -> models.TrainingConfig:
        return models.TrainingConfig(self.max_epochs, self.patience, self.batch_size)

    def to_dict(self) -> dict[str, Any]:
        payload = dataclasses.asdict(self)
        payload["quarter_hours"] = list(self.quarter_hours)
        payload["models"] = list(self.models)
        return payload


@dataclasses.dataclass(frozen=True)
class ForecastRecord:
    """A stored forecast.

    Attributes:
        model_id: The forecasting model.
        delivery: The delivery period.
        forecast: The 99 quantiles.
        mu_hat: The point forecast of the expected price.
        fit_date: Last in-sample day of the estimation window.
        window_id: Out-of-sample day index at which the model was estimated.
        heavy_tail_flag: True when mu_hat is a location without a finite mean.
    """

    model_id: str
    delivery: dataio.DeliveryIndex
    forecast: models.QuantileForecast
    mu_hat: float
    fit_date: datetime.date
    window_id: int
    heavy_tail_flag: bool = False

    @property
    def key(self) -> tuple[str, dataio.DeliveryIndex]:
        return self.model_id, self.delivery


@dataclasses.dataclass(frozen=True)
class FailureRecord:
    model_id: str
    delivery: dataio.DeliveryIndex
    stage: str
    error: str


class ForecastStore:
    """Forecasts keyed uniquely by model and delivery period."""

    def __init__(self, records: abc.Iterable[ForecastRecord] = ()) -> None:
        self._records: dict[tuple[str, dataio.DeliveryIndex], ForecastRecord] = {}
        self.failures: list[FailureRecord] = []
        for record in records:
            self.add(record)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> abc.Iterator[ForecastRecord]:
        for key in sorted(self._records):
            yield self._records[key]

    def __contains__(self, key: tuple[str, dataio.DeliveryIndex]) -> bool:
        return key in self._records

    def add(self, record: ForecastRecord) -> None:
        """Adds a record.

        Raises:
            IntegrityError: If the (model, delivery) key is already stored.
        """
        if record.key in self._records:
            raise exceptions.IntegrityError(
                f"Duplicate forecast for {record.model_id} at {record.delivery}."
            )
        self._records[record.key] = record

    def extend_new(self, records: abc.Iterable[ForecastRecord]) -> int:
        """Adds the records whose keys are not yet stored; returns how many."""
        added = 0
        for record in records:
            if record.key not in self._records:
                self._records[record.key] = record
                added += 1
        return added

    def get(self, model_id: str, delivery: dataio.DeliveryIndex) -> ForecastRecord:
        return self._records[(model_id, delivery)]

    @property
    def model_ids(self) -> list[str]:
        return sorted({model_id for model_id, _ in self._records})

    @property
    def deliveries(self) -> list[dataio.DeliveryIndex]:
        return sorted({delivery for _, delivery in self._records})

    def to_frame(self) -> pd.DataFrame:
        """One row per record with the store file columns."""
        rows = []
        for record in self:
            rows.append(
                [
                    record.model_id,
                    record.delivery.day.isoformat(),
                    record.delivery.qh,
                    record.mu_hat,
                ]
                + record.forecast.values.tolist()
                + [record.fit_date.isoformat(), record.window_id, record.heavy_tail_flag]
            )
        return pd.DataFrame(rows, columns=list(STORE_COLUMNS))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> ForecastStore:
        """Rebuilds a store from the store file columns.

        Raises:
            SchemaError: If columns are missing.
            IntegrityError: If a (model, delivery) key repeats.
        """
        absent = [name for name in STORE_COLUMNS if name not in frame.columns]
        if absent:
            raise exceptions.SchemaError(f"Forecast store lacks columns {absent}.")
        duplicated = frame.duplicated(["model_id", "date", "qh"])
        if duplicated.any():
            raise exceptions.IntegrityError(
                f"Forecast store has {int(duplicated.sum())} duplicate keys."
            )
        quantiles = frame.loc[:, list(QUANTILE_COLUMNS)].to_numpy(dtype=np.float64)
        store = cls()
        for position, row in enumerate(frame.itertuples(index=False)):
            delivery = dataio.DeliveryIndex(_to_date(row.date), int(row.qh))
            store.add(
                ForecastRecord(
                    str(row.model_id),
                    delivery,
                    models.QuantileForecast(quantiles[position], delivery, str(row.model_id)),
                    float(row.mu_hat),
                    _to_date(row.fit_date),
                    int(row.window_id),
                    _to_bool(row.heavy_tail_flag),
                )
            )
        return store


def save_store(
    store: ForecastStore,
    path: str | pathlib.Path,
    config: RollingConfig | None = None,
    append: bool = False,
) -> None:
    """Writes the store CSV and its JSON sidecar.

    Args:
        store: The forecasts.
        path: The CSV file; the sidecar shares its stem with a .json suffix.
        config: Run configuration recorded in the sidecar.
        append: Merge into an existing store, adding only new keys.
    """
    path = pathlib.Path(path)
    if append and path.exists():
        merged = load_store(path)
        added = merged.extend_new(store)
        logger.info("Appended %d new forecasts to %s.", added, path)
        store = merged
    store.to_frame().to_csv(path, index=False, lineterminator="\n")
    sidecar = {
        "schema_version": STORE_SCHEMA_VERSION,
        "config": None if config is None else config.to_dict(),
        "version": _package_version(),
    }
    utils.save_json(sidecar, _sidecar_path(path))


def load_store(path: str | pathlib.Path) -> ForecastStore:
    """Reads a store written by `save_store`.

    Raises:
        SchemaError: If the sidecar schema version is unknown.
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise exceptions.MissingArtifactError(f"Forecast store {path} does not exist.")
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        version = utils.load_json(sidecar).get("schema_version")
        if version != STORE_SCHEMA_VERSION:
            raise exceptions.SchemaError(
                f"Forecast store schema version {version} is not {STORE_SCHEMA_VERSION}."
            )
    frame = pd.read_csv(
        path,
        dtype={"model_id": str, "date": str, "fit_date": str},
        float_precision="round_trip",
    )
    return ForecastStore.from_frame(frame)


def feature_table(
    panel: dataio.MarketPanel,
    book: features.TransactionBook,
    quarter_hours: abc.Sequence[int],
    first_day: int = 1,
    last_day: int | None = None,
) -> pd.DataFrame:
    """Feature rows of the given quarter-hours for panel days [first_day, last_day).

    The first panel day has no previous day and thus no feature rows.
    """
    first_day = max(first_day, 1)
    last_day = len(panel.days) if last_day is None else last_day
    deliveries = [
        dataio.DeliveryIndex(panel.days[position], qh)
        for position in range(first_day, last_day)
        for qh in quarter_hours
    ]
    return features.build_feature_matrix(panel, book, deliveries)


def initial_partitions(
    panel: dataio.MarketPanel,
    book: features.TransactionBook,
    config: RollingConfig,
    qh: int,
) -> tuple[models.Dataset, models.Dataset]:
    """Training and validation partitions of the first in-sample window.

    These are the only rows hyperparameter tuning may see.
    """
    _check_history(panel, config)
    table = feature_table(panel, book, (qh,), 1, config.in_sample_days)
    frame, target = _by_position(panel, table, qh)
    return _split(frame, target[frame.index.to_numpy()], 0, config)


def rolling_backtest(
    panel: dataio.MarketPanel,
    transactions: pd.DataFrame | features.TransactionBook,
    config: RollingConfig,
    tuned: dict[str, dict[int, dict[str, Any]]] | None = None,
    jobs: int = 1,
) -> ForecastStore:
    """Runs the rolling-window backtest.

    Args:
        panel: Cleaned market panel spanning at least D + N days.
        transactions: Intraday transactions.
        config: The rolling-window settings.
        tuned: Hyperparameters by model id and quarter-hour, required for
            gamlss and probNN models.
        jobs: Number of worker processes; results do not depend on it.

    Returns:
        The store of successful forecasts; failed fits and forecasts are
        listed in its `failures`.

    Raises:
        InsufficientHistoryError: If the panel is too short.
        MissingArtifactError: If tuned hyperparameters are missing.
    """
    _check_history(panel, config)
    tuned = tuned or {}
    for model_id in config.models:
        if model_id in TUNED_MODELS:
            absent = [qh for qh in config.quarter_hours if qh not in tuned.get(model_id, {})]
            if absent:
                raise exceptions.MissingArtifactError(
                    f"No tuned hyperparameters for {model_id} at quarter-hours {absent}; "
                    "run the tune command first."
                )
    book = (
        transactions
        if isinstance(transactions, features.TransactionBook)
        else features.TransactionBook(transactions)
    )
    last_day = config.in_sample_days + config.out_of_sample_days
    logger.info("Assembling features for %d quarter-hours.", len(config.quarter_hours))
    table = feature_table(panel, book, config.quarter_hours, 1, last_day)

    tasks = []
    for qh in config.quarter_hours:
        frame, target = _by_position(panel, table, qh)
        for model_id in config.models:
            tasks.append(
                _Task(
                    model_id,
                    qh,
                    tuple(panel.days[:last_day]),
                    frame,
                    target,
                    config,
                    tuned.get(model_id, {}).get(qh),
                )
            )

    logger.info("Running %d model tasks.", len(tasks))
    if jobs > 1:
        with futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(_run_task, tasks))
    else:
        outcomes = [_run_task(task) for task in tasks]

    store = ForecastStore()
    for records, failures in outcomes:
        for record in records:
            store.add(record)
        store.failures.extend(failures)
    store.failures.sort(key=lambda failure: (failure.model_id, failure.delivery))
    if store.failures:
        logger.warning("%d fits or forecasts failed and were skipped.", len(store.failures))
    return store


@dataclasses.dataclass(frozen=True)
class _Task:
    model_id: str
    qh: int
    days: tuple[datetime.date, ...]
    frame: pd.DataFrame
    target: np.ndarray
    config: RollingConfig
    hyper: dict[str, Any] | None


_RECOVERABLE = (exceptions.BaseLoggingError, ArithmeticError, ValueError)


def _run_task(task: _Task) -> tuple[list[ForecastRecord], list[FailureRecord]]:
    config = task.config
    records = []
    failures = []
    model: Any = None
    fit_date = None
    window_id = 0
    for step in range(config.out_of_sample_days):
        position = config.in_sample_days + step
        delivery = dataio.DeliveryIndex(task.days[position], task.qh)
        if model is None or step % config.refit_every == 0:
            try:
                model = _fit(task, position, step, model)
            except _RECOVERABLE as exc_info:
                failures.append(FailureRecord(task.model_id, delivery, "fit", str(exc_info)))
                model = None
                continue
            fit_date = task.days[position - 1]
            window_id = step
        try:
            forecast, mu_hat, flag = _predict(task, model, position, delivery)
        except _RECOVERABLE as exc_info:
            failures.append(FailureRecord(task.model_id, delivery, "predict", str(exc_info)))
            continue
        records.append(
            ForecastRecord(task.model_id, delivery, forecast, mu_hat, fit_date, window_id, flag)
        )
        logger.debug("Forecast %s for %s.", task.model_id, delivery)
    return records, failures


def _fit(task: _Task, position: int, step: int, previous: Any) -> Any:
    """Estimates a model on the D days before `position`."""
    config = task.config
    window = task.frame.loc[
        (task.frame.index >= position - config.in_sample_days) & (task.frame.index < position)
    ]
    target = task.target[window.index.to_numpy()]
    kind, _, family = task.model_id.partition(".")
    if kind == "naive":
        return models.fit_naive(window[models.NAIVE_INDEX].to_numpy(), target)
    if kind == "lasso":
        return models.fit_lasso_bic(window, target)

    start = position - config.in_sample_days
    train, val = _split(window, target, start, config)
    if kind == "gamlss":
        return models.fit_gamlss(
            train,
            val,
            family,
            task.hyper,
            config.training,
            warm_start=previous,  # type: ignore[arg-type]
        )
    rng = utils.derive_rng(config.seed, task.model_id, "fit", task.qh, step)
    return models.fit_probnn(
        train,
        val,
        family,
        task.hyper,
        rng,
        config.training,
        warm_start=previous,  # type: ignore[arg-type]
    )


def _predict(
    task: _Task, model: Any, position: int, delivery: dataio.DeliveryIndex
) -> tuple[models.QuantileForecast, float, bool]:
    vector = features.FeatureVector(
        task.frame.loc[position].to_numpy(dtype=np.float64),
        features.FEATURE_NAMES,
        delivery.cutoff,
    )
    rng = utils.derive_rng(
        task.config.seed, task.model_id, delivery.day.isoformat(), delivery.qh
    )
    n_samples = task.config.n_bootstrap
    if isinstance(model, models.NaiveModel):
        forecast = models.predict_naive(model, vector, n_samples, rng, delivery)
        return forecast, models.naive_point(vector), False
    if isinstance(model, models.LassoModel):
        forecast = models.predict_lasso(model, vector, n_samples, rng, delivery)
        return forecast, models.lasso_point(model, vector), False
    if isinstance(model, models.GamlssModel):
        params: dists.DistParams = models.predict_gamlss(model, vector)
    else:
        params = models.predict_probnn(model, vector)
    forecast = models.dist_to_quantiles(params, delivery, task.model_id)
    return forecast, params.mean_summary, params.heavy_tail_flag


def _split(
    frame: pd.DataFrame, target: np.ndarray, start: int, config: RollingConfig
) -> tuple[models.Dataset, models.Dataset]:
    """Splits window rows at `start + train_days` into training and validation."""
    boundary = start + config.train_days
    is_train = frame.index.to_numpy() < boundary
    return (
        models.Dataset(frame.loc[is_train], target[is_train]),
        models.Dataset(frame.loc[~is_train], target[~is_train]),
    )


def _by_position(
    panel: dataio.MarketPanel, table: pd.DataFrame, qh: int
) -> tuple[pd.DataFrame, np.ndarray]:
    """Feature rows of one quarter-hour indexed by day position, and the targets of every day."""
    rows = table.xs(qh, level="qh")
    positions = [panel.position(timestamp.date()) for timestamp in rows.index]
    frame = rows.set_axis(pd.Index(positions, name="position"), axis=0)
    target = panel.matrix("IP")[:, qh - 1]
    return frame, target


def _check_history(panel: dataio.MarketPanel, config: RollingConfig) -> None:
    needed = config.in_sample_days + config.out_of_sample_days
    n_days = len(panel.days)
    if n_days < needed:
        first_uncovered = panel.days[0] + datetime.timedelta(
            days=max(n_days, config.in_sample_days)
        )
        raise exceptions.InsufficientHistoryError(
            f"The panel has {n_days} days but {needed} are needed; the first day that "
            f"cannot be forecast is {first_uncovered}."
        )


def _sidecar_path(path: pathlib.Path) -> pathlib.Path:
    return path.with_suffix(".json")


def _package_version() -> str:
    try:
        return importlib.metadata.version("imbalance-forecast")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def _to_date(value: Any) -> datetime.date:
    return pd.Timestamp(value).date()


def _to_bool(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() == "true"
    return bool(value)
