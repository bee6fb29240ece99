""" Unit tests for the backtest module. """
# pylint: disable=redefined-outer-name
import dataclasses
import datetime
import json
import pathlib
import tempfile

import numpy as np
import pandas as pd
import pytest

from imbalance_forecast import backtest, dataio, exceptions, features, models

Market = tuple[dataio.MarketPanel, pd.DataFrame]

SMALL = backtest.RollingConfig(
    in_sample_days=35,
    out_of_sample_days=5,
    train_days=28,
    val_days=7,
    quarter_hours=(41, 42),
    n_bootstrap=199,
    models=("naive", "gamlss.N"),
    seed=3,
    max_epochs=5,
    patience=2,
)
TUNED = {"gamlss.N": {41: {"learning_rate": 0.01}, 42: {"learning_rate": 0.01}}}


def _record(model_id: str, day: int, qh: int, shift: float = 0.0) -> backtest.ForecastRecord:
    delivery = dataio.DeliveryIndex(datetime.date(2021, 3, day), qh)
    return backtest.ForecastRecord(
        model_id,
        delivery,
        models.QuantileForecast(np.linspace(-50.0, 50.0, 99) / 3.0 + shift, delivery, model_id),
        shift + 1 / 3,
        datetime.date(2021, 2, 28),
        0,
        model_id == "gamlss.t",
    )


@pytest.fixture(scope="module")
def store(synthetic_market: Market) -> backtest.ForecastStore:
    """The small backtest on the synthetic market."""
    panel, transactions = synthetic_market
    return backtest.rolling_backtest(panel, transactions, SMALL, TUNED)


def test_rolling_backtest_covers_every_key(store: backtest.ForecastStore) -> None:
    """Test that every model, day and quarter-hour has a forecast."""
    assert len(store) == 2 * 2 * 5
    assert not store.failures
    assert store.model_ids == ["gamlss.N", "naive"]
    assert len(store.deliveries) == 10


def test_rolling_backtest_refits_daily(
    store: backtest.ForecastStore, synthetic_market: Market
) -> None:
    """Test the fit date and window of each forecast with daily refits."""
    panel, _ = synthetic_market

    for record in store:
        position = panel.position(record.delivery.day)
        assert record.fit_date == panel.days[position - 1]
        assert record.window_id == position - SMALL.in_sample_days
        assert record.forecast.delivery == record.delivery
        assert (np.diff(record.forecast.values) >= 0).all()


def test_rolling_backtest_naive_point(
    store: backtest.ForecastStore, synthetic_market: Market
) -> None:
    """Test that the naive point forecast is the observed ID1 price."""
    panel, transactions = synthetic_market
    record = next(r for r in store if r.model_id == "naive")

    book = features.TransactionBook(transactions)
    vector = features.assemble_features(panel, book, record.delivery)

    assert record.mu_hat == vector.values[features.FEATURE_NAMES.index(models.NAIVE_INDEX)]
    assert not record.heavy_tail_flag


def test_rolling_backtest_refit_every(synthetic_market: Market) -> None:
    """Test that models are re-estimated every refit_every days only."""
    panel, transactions = synthetic_market
    config = dataclasses.replace(SMALL, models=("naive",), quarter_hours=(41,), refit_every=2)

    result = backtest.rolling_backtest(panel, transactions, config)

    assert [record.window_id for record in result] == [0, 0, 2, 2, 4]
    assert [record.fit_date for record in result] == [panel.days[i] for i in (34, 34, 36, 36, 38)]


def test_rolling_backtest_ignores_future_prices(synthetic_market: Market) -> None:
    """Test that imbalance prices from the forecast day onwards cannot change the forecast."""
    panel, transactions = synthetic_market
    config = dataclasses.replace(
        SMALL, models=("naive",), quarter_hours=(41,), out_of_sample_days=1
    )
    prices = panel.matrix("IP").copy()
    prices[config.in_sample_days :] = 1e4
    poisoned = panel.replace("IP", prices)

    clean = backtest.rolling_backtest(panel, transactions, config)
    leaked = backtest.rolling_backtest(poisoned, transactions, config)

    pd.testing.assert_frame_equal(clean.to_frame(), leaked.to_frame())


def test_rolling_backtest_is_reproducible(synthetic_market: Market) -> None:
    """Test that reruns and parallel runs give identical stores."""
    panel, transactions = synthetic_market
    config = dataclasses.replace(SMALL, models=("naive",), out_of_sample_days=2)

    first = backtest.rolling_backtest(panel, transactions, config)
    second = backtest.rolling_backtest(panel, transactions, config, jobs=2)

    pd.testing.assert_frame_equal(first.to_frame(), second.to_frame())


def test_rolling_backtest_records_fit_failures(synthetic_market: Market) -> None:
    """Test that a window too short for the naive model is recorded as failures."""
    panel, transactions = synthetic_market
    config = dataclasses.replace(
        SMALL, in_sample_days=20, train_days=14, val_days=6, models=("naive",), quarter_hours=(41,)
    )

    result = backtest.rolling_backtest(panel, transactions, config)

    assert len(result) == 0
    assert len(result.failures) == 5
    assert {failure.stage for failure in result.failures} == {"fit"}


def test_rolling_backtest_insufficient_history(synthetic_market: Market) -> None:
    """Test that a panel shorter than D + N days is rejected with the first uncovered day."""
    panel, transactions = synthetic_market
    config = dataclasses.replace(SMALL, out_of_sample_days=20)

    with pytest.raises(exceptions.InsufficientHistoryError) as exc_info:
        backtest.rolling_backtest(panel, transactions, config, TUNED)

    assert str(panel.days[-1] + datetime.timedelta(days=1)) in str(exc_info.value)


def test_rolling_backtest_requires_tuning(synthetic_market: Market) -> None:
    """Test that tuned models without hyperparameters are a missing artifact."""
    panel, transactions = synthetic_market

    with pytest.raises(exceptions.MissingArtifactError) as exc_info:
        backtest.rolling_backtest(panel, transactions, SMALL, {"gamlss.N": {41: {}}})

    assert "[42]" in str(exc_info.value)


@pytest.mark.parametrize(
    "override",
    [
        {"train_days": 20},
        {"n_bootstrap": 50},
        {"models": ("forest",)},
        {"quarter_hours": (0,)},
        {"quarter_hours": (5, 5)},
        {"refit_every": 0},
    ],
)
def test_rolling_config_validation(override: dict) -> None:
    """Test that inconsistent rolling settings are configuration errors."""
    with pytest.raises(exceptions.ConfigError):
        dataclasses.replace(SMALL, **override)


def test_initial_partitions(synthetic_market: Market) -> None:
    """Test that tuning sees the first window only, split into training and validation."""
    panel, transactions = synthetic_market

    train, val = backtest.initial_partitions(
        panel, features.TransactionBook(transactions), SMALL, 41
    )

    assert train.features.index.min() == 1
    assert train.features.index.max() == SMALL.train_days - 1
    assert val.features.index.min() == SMALL.train_days
    assert val.features.index.max() == SMALL.in_sample_days - 1
    np.testing.assert_array_equal(train.target, panel.matrix("IP")[1 : SMALL.train_days, 40])


def test_feature_table_skips_first_day(
    toy_panel: dataio.MarketPanel, toy_transactions: pd.DataFrame
) -> None:
    """Test that the first panel day has no feature rows."""
    book = features.TransactionBook(toy_transactions)
    table = backtest.feature_table(toy_panel, book, (1, 96))

    assert len(table) == 4
    assert table.index.get_level_values("date").min() == pd.Timestamp(toy_panel.days[1])


def test_store_rejects_duplicates() -> None:
    """Test that a (model, delivery) key is stored once."""
    store = backtest.ForecastStore([_record("naive", 2, 1)])

    with pytest.raises(exceptions.IntegrityError):
        store.add(_record("naive", 2, 1, shift=1.0))
    assert ("naive", dataio.DeliveryIndex(datetime.date(2021, 3, 2), 1)) in store


def test_store_round_trip() -> None:
    """Test that saved stores load with identical values and a sidecar."""
    store = backtest.ForecastStore(
        [_record("naive", 2, 1), _record("gamlss.t", 2, 1), _record("naive", 3, 96)]
    )
    with tempfile.TemporaryDirectory() as temp_dir:
        path = pathlib.Path(temp_dir) / "forecasts.csv"
        backtest.save_store(store, path, SMALL)
        loaded = backtest.load_store(path)
        sidecar = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))

    pd.testing.assert_frame_equal(loaded.to_frame(), store.to_frame())
    delivery = dataio.DeliveryIndex(datetime.date(2021, 3, 2), 1)
    assert loaded.get("gamlss.t", delivery).heavy_tail_flag
    assert sidecar["schema_version"] == backtest.STORE_SCHEMA_VERSION
    assert sidecar["config"]["quarter_hours"] == [41, 42]


def test_store_append_adds_new_keys_only() -> None:
    """Test that appending keeps stored forecasts and adds the new ones."""
    with tempfile.TemporaryDirectory() as temp_dir:
        path = pathlib.Path(temp_dir) / "forecasts.csv"
        backtest.save_store(backtest.ForecastStore([_record("naive", 2, 1)]), path)
        update = backtest.ForecastStore([_record("naive", 2, 1, 5.0), _record("naive", 3, 1)])
        backtest.save_store(update, path, append=True)
        loaded = backtest.load_store(path)

    assert len(loaded) == 2
    assert loaded.get("naive", dataio.DeliveryIndex(datetime.date(2021, 3, 2), 1)).mu_hat == 1 / 3


def test_load_store_errors() -> None:
    """Test missing stores, unknown schema versions and duplicate keys."""
    with tempfile.TemporaryDirectory() as temp_dir:
        path = pathlib.Path(temp_dir) / "forecasts.csv"
        with pytest.raises(exceptions.MissingArtifactError):
            backtest.load_store(path)

        backtest.save_store(backtest.ForecastStore([_record("naive", 2, 1)]), path)
        frame = pd.read_csv(path)
        pd.concat([frame, frame]).to_csv(path, index=False)
        with pytest.raises(exceptions.IntegrityError):
            backtest.load_store(path)

        path.with_suffix(".json").write_text(json.dumps({"schema_version": 0}), encoding="utf-8")
        with pytest.raises(exceptions.SchemaError):
            backtest.load_store(path)
