""" Shared fixtures: hand-built toy panels and a small synthetic market. """
# pylint: disable=redefined-outer-name
from __future__ import annotations

import datetime
from typing import Callable

import numpy as np
import pandas as pd
import pytest

from imbalance_forecast import dataio

TOY_START = datetime.date(2021, 3, 1)


def make_panel(n_days: int, seed: int = 0, start: datetime.date = TOY_START) -> dataio.MarketPanel:
    """A panel with every column, random quarter-hourly values and consistent reserves."""
    rng = np.random.default_rng(seed)
    shape = (n_days, dataio.QH_PER_DAY)
    columns: dict[str, np.ndarray] = {
        name: rng.normal(50.0, 5.0, shape)
        for name in ("IP", "DA", "IA", *dataio.INDEX_COLUMNS, *dataio.FUNDAMENTAL_COLUMNS)
    }
    columns["Imb"] = rng.normal(0.0, 100.0, shape)
    for position, name in enumerate(dataio.RESERVE_COLUMNS):
        if name.endswith("_avg"):
            average = rng.normal(20.0, 3.0, shape)
            prefix = name[: -len("_avg")]
            columns[f"{prefix}_min"] = average - 1.0
            columns[name] = average
            columns[f"{prefix}_max"] = average + 1.0 + position
    for name in dataio.DAILY_COLUMNS:
        columns[name] = np.repeat(rng.uniform(10.0, 90.0, (n_days, 1)), dataio.QH_PER_DAY, axis=1)
    days = pd.date_range(pd.Timestamp(start), periods=n_days, freq="D")
    return dataio.panel_from_arrays(days, columns)


@pytest.fixture
def toy_panel() -> dataio.MarketPanel:
    """Three days starting on a Monday."""
    return make_panel(3)


@pytest.fixture
def toy_transactions() -> pd.DataFrame:
    """A handful of trades of day 2 of the toy panel."""
    day = pd.Timestamp(TOY_START) + pd.Timedelta(days=1)
    delivery = day + pd.Timedelta(hours=10)
    rows = [
        ("QH", 41, day, delivery - pd.Timedelta(minutes=70), 50.0, 10.0),
        ("QH", 41, day, delivery - pd.Timedelta(minutes=45), 60.0, 30.0),
        ("QH", 41, day, delivery - pd.Timedelta(minutes=20), 500.0, 5.0),
        ("H", 11, day, delivery - pd.Timedelta(minutes=40), 40.0, 2.0),
    ]
    frame = pd.DataFrame(rows, columns=list(dataio.TRANSACTION_COLUMNS))
    frame["product_id"] = frame["product_id"].astype(np.int64)
    return dataio.validate_transactions(frame)


@pytest.fixture(scope="session")
def synthetic_market() -> tuple[dataio.MarketPanel, pd.DataFrame]:
    """A 45-day synthetic market with sparse trading, cleaned."""
    config = dataio.SynthConfig(seed=11, n_days=45, txn_rate=2.0)
    panel, transactions = dataio.generate_synthetic(config)
    panel, _ = dataio.clean_panel(panel)
    return panel, transactions


@pytest.fixture
def panel_factory() -> Callable[..., dataio.MarketPanel]:
    """Builds toy panels of any length."""
    return make_panel
