""" Market data: panel and transaction I/O, cleaning and the synthetic market.

The panel is a quarter-hourly table keyed by (date, qh) with qh = 1 for the
delivery period 00:00-00:15. Days always carry 96 quarter-hours; daylight
saving days are expected to be mapped onto this regular grid upstream.

Intraday index columns (ID1, ID3, IDX) hold the published, full-window
indices. Features never read them; they recompute the indices from the
transactions on windows that close 30 minutes before delivery.
"""
from __future__ import annotations

import dataclasses
import datetime
import enum
import functools
import logging
import math
import pathlib
from collections import abc

import numpy as np
import pandas as pd

from imbalance_forecast import exceptions, logs, utils

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

QH_PER_DAY = 96
QH_MINUTES = 15
CUTOFF_MINUTES = 30

SIDES = ("POS", "NEG")
KINDS = ("CAP", "EN")
STATS = ("min", "avg", "max")
RESERVE_MARKETS = ("aFRR", "mFRR")
INDEX_COLUMNS = ("ID1_h", "ID3_h", "IDX_h", "ID1_qh", "ID3_qh", "IDX_qh")
FUNDAMENTAL_COLUMNS = ("Load", "WiOn", "WiOff", "Solar")
DAILY_COLUMNS = ("Coal", "Gas", "Oil", "EUA")
RESERVE_COLUMNS = tuple(
    f"{market}_{side}_{kind}_{stat}"
    for market in RESERVE_MARKETS
    for side in SIDES
    for kind in KINDS
    for stat in STATS
)
PANEL_COLUMNS = (
    ("IP", "DA", "IA")
    + INDEX_COLUMNS
    + FUNDAMENTAL_COLUMNS
    + ("Imb",)
    + RESERVE_COLUMNS
    + DAILY_COLUMNS
)
MANDATORY_COLUMNS = ("IP", "DA")
TRANSACTION_COLUMNS = (
    "product_type",
    "product_id",
    "delivery_date",
    "exec_time",
    "price",
    "volume",
)
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S.%f"
MIN_SYNTH_DAYS = 40


@dataclasses.dataclass(frozen=True, order=True)
class DeliveryIndex:
    """A quarter-hourly delivery period.

    Attributes:
        day: The delivery day.
        qh: The quarter-hour of the day, 1 to 96.
    """

    day: datetime.date
    qh: int

    def __post_init__(self) -> None:
        if isinstance(self.day, datetime.datetime):
            object.__setattr__(self, "day", self.day.date())
        if not 1 <= int(self.qh) <= QH_PER_DAY:
            raise exceptions.InputError(f"Quarter-hour {self.qh} is not in [1, 96].")
        object.__setattr__(self, "qh", int(self.qh))

    @property
    def hour(self) -> int:
        """The delivery hour, 1 to 24."""
        return math.ceil(self.qh / 4)

    @property
    def start(self) -> pd.Timestamp:
        """The start of the delivery period."""
        return pd.Timestamp(self.day) + pd.Timedelta(minutes=QH_MINUTES * (self.qh - 1))

    @property
    def cutoff(self) -> pd.Timestamp:
        """The forecast cutoff, 30 minutes before delivery."""
        return self.start - pd.Timedelta(minutes=CUTOFF_MINUTES)


class ProductType(str, enum.Enum):
    """Intraday continuous product types."""

    HOURLY = "H"
    QUARTER_HOURLY = "QH"


@dataclasses.dataclass(frozen=True)
class Product:
    """An intraday continuous product, identified by its type and number."""

    product_type: ProductType
    product_id: int
    delivery_date: datetime.date

    def __post_init__(self) -> None:
        object.__setattr__(self, "product_type", ProductType(self.product_type))
        upper = 24 if self.product_type == ProductType.HOURLY else QH_PER_DAY
        if not 1 <= int(self.product_id) <= upper:
            raise exceptions.InputError(
                f"Product id {self.product_id} is not in [1, {upper}]."
            )
        if isinstance(self.delivery_date, datetime.datetime):
            object.__setattr__(self, "delivery_date", self.delivery_date.date())

    @property
    def delivery_start(self) -> pd.Timestamp:
        """The start of the delivery period of the product."""
        minutes = 60 if self.product_type == ProductType.HOURLY else QH_MINUTES
        return pd.Timestamp(self.delivery_date) + pd.Timedelta(
            minutes=minutes * (self.product_id - 1)
        )

    @classmethod
    def hourly(cls, delivery: DeliveryIndex) -> Product:
        """The hourly product covering a quarter-hour."""
        return cls(ProductType.HOURLY, delivery.hour, delivery.day)

    @classmethod
    def quarter_hourly(cls, delivery: DeliveryIndex) -> Product:
        """The quarter-hourly product of a quarter-hour."""
        return cls(ProductType.QUARTER_HOURLY, delivery.qh, delivery.day)


@dataclasses.dataclass(frozen=True)
class Transaction:
    """A single intraday continuous trade."""

    product: Product
    exec_time: pd.Timestamp
    price: float
    volume: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "exec_time", pd.Timestamp(self.exec_time))
        if not self.volume > 0:
            raise exceptions.InputError(f"Transaction volume {self.volume} is not > 0.")
        if not np.isfinite(self.price):
            raise exceptions.InputError("Transaction price is not finite.")
        if self.exec_time >= self.product.delivery_start:
            raise exceptions.InputError(
                f"Transaction executed at {self.exec_time} is not before delivery "
                f"start {self.product.delivery_start}."
            )


@dataclasses.dataclass(frozen=True, eq=False)
class MarketPanel:
    """Quarter-hourly market data on a contiguous grid.

    Attributes:
        frame: Float columns indexed by a (date, qh) MultiIndex, sorted,
            96 rows per day and no gaps between the first and the last day.
    """

    frame: pd.DataFrame

    def __post_init__(self) -> None:
        _check_grid(self.frame)
        _check_reserve_order(self.frame)

    @functools.cached_property
    def days(self) -> list[datetime.date]:
        """The panel days in ascending order."""
        dates = self.frame.index.get_level_values("date")[::QH_PER_DAY]
        return [timestamp.date() for timestamp in dates]

    @functools.cached_property
    def _positions(self) -> dict[datetime.date, int]:
        return {day: position for position, day in enumerate(self.days)}

    @property
    def columns(self) -> list[str]:
        """The data columns present in the panel."""
        return list(self.frame.columns)

    def has_day(self, day: datetime.date) -> bool:
        """Whether the panel covers a day."""
        return day in self._positions

    def position(self, day: datetime.date) -> int:
        """The row position of a day in the day-by-quarter-hour matrices."""
        try:
            return self._positions[day]
        except KeyError as exc_info:
            raise exceptions.InsufficientHistoryError(
                f"Day {day} is not covered by the panel."
            ) from exc_info

    def matrix(self, column: str) -> np.ndarray:
        """A column as a days-by-96 array."""
        if column not in self.frame.columns:
            raise exceptions.SchemaError(f"Panel has no column {column}.")
        return self.frame[column].to_numpy(dtype=np.float64).reshape(-1, QH_PER_DAY)

    def value(self, column: str, delivery: DeliveryIndex) -> float:
        """A single panel value."""
        return float(self.matrix(column)[self.position(delivery.day), delivery.qh - 1])

    def replace(self, column: str, values: np.ndarray) -> MarketPanel:
        """Returns a new panel with one column replaced by a days-by-96 array."""
        frame = self.frame.copy()
        frame[column] = np.asarray(values, dtype=np.float64).reshape(-1)
        return MarketPanel(frame)


@dataclasses.dataclass
class LoadReport:
    """Counts of missing cells found while loading a panel."""

    n_rows: int
    missing: dict[str, int]
    unparseable: dict[str, int]

    @property
    def total_missing(self) -> int:
        """Number of missing cells, unparseable cells included."""
        return sum(self.missing.values())


@dataclasses.dataclass(frozen=True)
class CleaningPolicy:
    """Parameters of the panel cleaning.

    Attributes:
        max_gap: Longest run of missing values filled by linear interpolation.
    """

    max_gap: int = 4

    def __post_init__(self) -> None:
        if self.max_gap < 0:
            raise exceptions.ConfigError("max_gap must be non-negative.")


@dataclasses.dataclass(frozen=True)
class CleaningRecord:
    """A single filled cell."""

    date: str
    qh: int
    column: str
    method: str
    value: float


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic market.

    Attributes:
        seed: Seed of the random generator.
        n_days: Number of days to generate.
        start_date: First generated day.
        annual_amplitude: Amplitude of the annual price cycle in EUR/MWh.
        daily_amplitude: Amplitude of the daily price shape in EUR/MWh.
        noise_scale: Scale of price noise in EUR/MWh.
        tail_df: Degrees of freedom of the Student-t imbalance shocks.
        spike_prob: Probability of a price spike per quarter-hour.
        txn_rate: Expected transactions per product per trading hour.
        trading_hours: Hours before delivery in which products trade.
        imbalance_scale: Scale of the system imbalance in MWh.
        spike_scale: Scale of price spikes in EUR/MWh.
    """

    seed: int = 1
    n_days: int = 120
    start_date: datetime.date = datetime.date(2019, 1, 1)
    annual_amplitude: float = 10.0
    daily_amplitude: float = 15.0
    noise_scale: float = 8.0
    tail_df: float = 4.0
    spike_prob: float = 0.005
    txn_rate: float = 6.0
    trading_hours: float = 4.0
    imbalance_scale: float = 250.0
    spike_scale: float = 150.0

    def __post_init__(self) -> None:
        if self.n_days < MIN_SYNTH_DAYS:
            raise exceptions.ConfigError(
                f"n_days must be at least {MIN_SYNTH_DAYS}, got {self.n_days}."
            )
        scales = {
            "annual_amplitude": self.annual_amplitude,
            "daily_amplitude": self.daily_amplitude,
            "noise_scale": self.noise_scale,
            "txn_rate": self.txn_rate,
            "imbalance_scale": self.imbalance_scale,
            "spike_scale": self.spike_scale,
        }
        for name, value in scales.items():
            if not value >= 0:
                raise exceptions.ConfigError(f"{name} must be non-negative.")
        if not self.tail_df > 0:
            raise exceptions.ConfigError("tail_df must be positive.")
        if not 0 <= self.spike_prob <= 1:
            raise exceptions.ConfigError("spike_prob must be in [0, 1].")
        if not self.trading_hours * 60 > 3.5 * 60:
            raise exceptions.ConfigError("trading_hours must exceed 3.5 hours.")


def load_panel(
    path: str | pathlib.Path, schema: abc.Mapping[str, str] | None = None
) -> tuple[MarketPanel, LoadReport]:
    """Loads a panel CSV file.

    Args:
        path: The CSV file.
        schema: Maps canonical column names to the headers used in the file.
            Columns not mentioned are expected under their canonical name.

    Returns:
        The panel and a report of missing and unparseable cells.
    """
    logger.debug("Loading panel from %s.", path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    rename = {
        header: canonical for canonical, header in (schema or {}).items()
    }
    raw = raw.rename(columns=rename)

    absent = [name for name in ("date", "qh", *MANDATORY_COLUMNS) if name not in raw]
    if absent:
        raise exceptions.SchemaError(f"Panel file lacks mandatory columns: {absent}.")

    dates = pd.to_datetime(raw["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    quarter_hours = pd.to_numeric(raw["qh"].str.strip(), errors="coerce")
    bad_keys = dates.isna() | quarter_hours.isna()
    if bad_keys.any():
        raise exceptions.InputError(
            f"Unparseable date or qh on rows {list(np.flatnonzero(bad_keys)[:10])}."
        )

    columns = [name for name in PANEL_COLUMNS if name in raw.columns]
    data: dict[str, np.ndarray] = {}
    missing: dict[str, int] = {}
    unparseable: dict[str, int] = {}
    for name in columns:
        values, n_blank, n_bad = _parse_floats(raw[name])
        data[name] = values
        missing[name] = n_blank + n_bad
        unparseable[name] = n_bad

    frame = pd.DataFrame(data, columns=columns)
    frame.index = pd.MultiIndex.from_arrays(
        [dates, quarter_hours.astype(np.int64)], names=["date", "qh"]
    )
    frame = frame.sort_index()
    report = LoadReport(n_rows=len(frame), missing=missing, unparseable=unparseable)
    if report.total_missing:
        logger.info("Panel has %d missing cells.", report.total_missing)
    return MarketPanel(frame), report


def save_panel(panel: MarketPanel, path: str | pathlib.Path) -> None:
    """Saves a panel to CSV; missing values are written as empty strings."""
    frame = panel.frame.reset_index()
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame.to_csv(path, index=False, na_rep="", lineterminator="\n")


def panel_from_arrays(
    days: abc.Sequence[datetime.date] | pd.DatetimeIndex,
    columns: abc.Mapping[str, np.ndarray],
) -> MarketPanel:
    """Builds a panel from days-by-96 arrays.

    Args:
        days: Consecutive days.
        columns: Column name to an array of shape (len(days), 96).

    Returns:
        The panel, with columns in canonical order.
    """
    dates = pd.DatetimeIndex(pd.to_datetime(list(days))).normalize()
    index = pd.MultiIndex.from_product(
        [dates, np.arange(1, QH_PER_DAY + 1)], names=["date", "qh"]
    )
    ordered = [name for name in PANEL_COLUMNS if name in columns]
    data = {
        name: np.asarray(columns[name], dtype=np.float64).reshape(-1)
        for name in ordered
    }
    return MarketPanel(pd.DataFrame(data, index=index, columns=ordered))


def clean_panel(
    panel: MarketPanel, policy: CleaningPolicy | None = None
) -> tuple[MarketPanel, list[CleaningRecord]]:
    """Fills every missing value of a panel.

    Runs of at most `policy.max_gap` missing values with observed neighbours on
    both sides are linearly interpolated. Other runs take the median of the
    same quarter-hour on the same weekday in other weeks, falling back to the
    quarter-hour median and then the column median. Per-day columns (fuel and
    EUA prices) are forward-filled from the last observed day.

    Args:
        panel: A grid-complete panel.
        policy: The cleaning policy.

    Returns:
        The filled panel and one record per filled cell.
    """
    policy = policy or CleaningPolicy()
    frame = panel.frame.copy()
    dates = [day.isoformat() for day in panel.days]
    records: list[CleaningRecord] = []

    for column in frame.columns:
        matrix = panel.matrix(column)
        if not np.isnan(matrix).any():
            continue
        if np.isnan(matrix).all():
            raise exceptions.UnfillableError(f"Column {column} is entirely missing.")
        if column in DAILY_COLUMNS:
            filled, methods = _fill_daily(matrix)
        else:
            filled, methods = _fill_quarter_hourly(matrix, policy.max_gap)
        for day_pos, qh_pos in zip(*np.nonzero(np.isnan(matrix))):
            records.append(
                CleaningRecord(
                    date=dates[day_pos],
                    qh=int(qh_pos) + 1,
                    column=column,
                    method=methods[day_pos, qh_pos],
                    value=float(filled[day_pos, qh_pos]),
                )
            )
        frame[column] = filled.reshape(-1)

    if records:
        logger.info("Cleaning filled %d cells.", len(records))
    return MarketPanel(frame), records


def save_cleaning_report(
    records: abc.Sequence[CleaningRecord], path: str | pathlib.Path
) -> None:
    """Saves the cleaning report as a JSON list."""
    utils.save_json([dataclasses.asdict(record) for record in records], path)


def load_transactions(path: str | pathlib.Path) -> pd.DataFrame:
    """Loads a transactions CSV file.

    Returns:
        The transactions table with columns `TRANSACTION_COLUMNS`.
    """
    logger.debug("Loading transactions from %s.", path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    absent = [name for name in TRANSACTION_COLUMNS if name not in raw.columns]
    if absent:
        raise exceptions.SchemaError(f"Transactions file lacks columns: {absent}.")
    price, _, bad_price = _parse_floats(raw["price"])
    volume, _, bad_volume = _parse_floats(raw["volume"])
    frame = pd.DataFrame(
        {
            "product_type": raw["product_type"].str.strip(),
            "product_id": pd.to_numeric(raw["product_id"], errors="coerce"),
            "delivery_date": pd.to_datetime(
                raw["delivery_date"], format="%Y-%m-%d", errors="coerce"
            ),
            "exec_time": pd.to_datetime(raw["exec_time"], format="ISO8601", errors="coerce"),
            "price": price,
            "volume": volume,
        }
    )
    if bad_price or bad_volume or frame.isna().any().any():
        raise exceptions.InputError("Transactions file has missing or unparseable cells.")
    frame["product_id"] = frame["product_id"].astype(np.int64)
    return validate_transactions(frame)


def save_transactions(frame: pd.DataFrame, path: str | pathlib.Path) -> None:
    """Saves a transactions table to CSV."""
    out = frame.loc[:, list(TRANSACTION_COLUMNS)].copy()
    out["delivery_date"] = out["delivery_date"].dt.strftime("%Y-%m-%d")
    out["exec_time"] = out["exec_time"].dt.strftime(TIMESTAMP_FORMAT)
    out.to_csv(path, index=False, lineterminator="\n")


def validate_transactions(frame: pd.DataFrame) -> pd.DataFrame:
    """Checks the transaction invariants and returns the table sorted.

    Raises:
        InputError: If a product is unknown, a volume is not positive, a price
            is not finite or a trade is not executed before delivery start.
    """
    types = frame["product_type"]
    if not types.isin([member.value for member in ProductType]).all():
        raise exceptions.InputError("Unknown product type in transactions.")
    upper = np.where(types == ProductType.HOURLY.value, 24, QH_PER_DAY)
    ids = frame["product_id"].to_numpy()
    if ((ids < 1) | (ids > upper)).any():
        raise exceptions.InputError("Product id out of range in transactions.")
    if not (frame["volume"] > 0).all():
        raise exceptions.InputError("Transaction volumes must be positive.")
    if not np.isfinite(frame["price"].to_numpy(dtype=np.float64)).all():
        raise exceptions.InputError("Transaction prices must be finite.")
    if (frame["exec_time"] >= delivery_starts(frame)).any():
        raise exceptions.InputError("Transactions must be executed before delivery start.")
    return frame.sort_values(
        ["delivery_date", "product_type", "product_id", "exec_time"], kind="stable"
    ).reset_index(drop=True)


def delivery_starts(frame: pd.DataFrame) -> pd.Series:
    """The delivery start of every transaction's product."""
    minutes = np.where(frame["product_type"] == ProductType.HOURLY.value, 60, QH_MINUTES)
    offsets = pd.to_timedelta(minutes * (frame["product_id"].to_numpy() - 1), unit="min")
    return frame["delivery_date"] + offsets


def transactions_to_frame(transactions: abc.Iterable[Transaction]) -> pd.DataFrame:
    """Converts transaction records into a transactions table."""
    rows = [
        {
            "product_type": txn.product.product_type.value,
            "product_id": txn.product.product_id,
            "delivery_date": pd.Timestamp(txn.product.delivery_date),
            "exec_time": txn.exec_time,
            "price": float(txn.price),
            "volume": float(txn.volume),
        }
        for txn in transactions
    ]
    frame = pd.DataFrame(rows, columns=list(TRANSACTION_COLUMNS))
    frame["product_id"] = frame["product_id"].astype(np.int64)
    frame["delivery_date"] = pd.to_datetime(frame["delivery_date"])
    frame["exec_time"] = pd.to_datetime(frame["exec_time"])
    frame["price"] = frame["price"].astype(np.float64)
    frame["volume"] = frame["volume"].astype(np.float64)
    return frame


def frame_to_transactions(frame: pd.DataFrame) -> list[Transaction]:
    """Converts a transactions table into transaction records."""
    return [
        Transaction(
            product=Product(ProductType(row.product_type), row.product_id, row.delivery_date),
            exec_time=row.exec_time,
            price=row.price,
            volume=row.volume,
        )
        for row in frame.itertuples(index=False)
    ]


def distance_rule_violations(panel: MarketPanel, tol: float = 1e-9) -> np.ndarray:
    """Flags quarter-hours where the imbalance price is too close to the intraday index.

    Under undersupply (Imb < 0) the price must be at least the larger of
    1.25 times and 10 EUR/MWh above the intraday index; under oversupply it
    must be at most the smaller of 0.75 times and 10 EUR/MWh below it.

    Returns:
        A days-by-96 boolean array, True where the rule is violated.
    """
    price = panel.matrix("IP")
    index = panel.matrix("IDX_qh")
    imbalance = panel.matrix("Imb")
    lower, upper = _distance_bounds(index)
    short = (imbalance < 0) & (price < lower - tol)
    long = (imbalance > 0) & (price > upper + tol)
    return short | long


def generate_synthetic(config: SynthConfig) -> tuple[MarketPanel, pd.DataFrame]:
    """Generates a synthetic market panel and its intraday transactions.

    Day-ahead prices follow annual, weekly and daily shapes plus an hourly
    AR(1). Fundamentals follow smooth shapes plus noise. Intraday trades are
    drawn around quarter-hourly fair values with a per-product drift. The
    system imbalance is an AR(1) with Student-t shocks. The basic imbalance
    price divides balancing costs minus revenues by the net activated
    balancing energy and is then pushed away from the intraday index.

    Args:
        config: The generator parameters.

    Returns:
        The panel and the transactions table. Identical configs give identical
        outputs.
    """
    logger.info("Generating %d synthetic days with seed %d.", config.n_days, config.seed)
    rng = np.random.default_rng(config.seed)
    n_days = config.n_days
    days = pd.date_range(pd.Timestamp(config.start_date), periods=n_days, freq="D")
    day_of_year = (days.dayofyear.to_numpy() - 1).astype(np.float64)
    weekend = (days.dayofweek.to_numpy() >= 5).astype(np.float64)
    hour_of_qh = np.arange(QH_PER_DAY) / 4.0

    fundamentals = _synthetic_fundamentals(rng, day_of_year, weekend, hour_of_qh)
    residual_load = (
        fundamentals["Load"]
        - fundamentals["WiOn"]
        - fundamentals["WiOff"]
        - fundamentals["Solar"]
    )
    day_ahead = _synthetic_day_ahead(rng, config, day_of_year, weekend, residual_load)

    fair = _synthetic_fair_values(rng, config, day_ahead)
    intraday_auction = fair + rng.normal(0.0, 0.3 * config.noise_scale, fair.shape)
    transactions = _synthetic_transactions(rng, config, days, fair)
    indices = _published_indices(transactions, n_days, days, intraday_auction)

    reserves = _synthetic_reserves(rng, day_ahead)
    imbalance = _synthetic_imbalance(rng, config, n_days)
    price = _settle(rng, config, imbalance, reserves, indices["IDX_qh"])

    columns: dict[str, np.ndarray] = {
        "IP": price,
        "DA": day_ahead,
        "IA": intraday_auction,
        **indices,
        **fundamentals,
        "Imb": imbalance,
        **reserves,
        **_synthetic_fuels(rng, n_days, weekend),
    }
    return panel_from_arrays(days, columns), transactions


def _parse_floats(text: pd.Series) -> tuple[np.ndarray, int, int]:
    """Parses strings into floats.

    Returns:
        The values, the number of blank cells, and the number of non-blank
        cells that are unparseable or non-finite.
    """
    stripped = text.astype(str).str.strip()
    blank = (stripped == "").to_numpy()
    numeric = pd.to_numeric(stripped.where(~blank), errors="coerce").to_numpy(
        dtype=np.float64
    )
    valid = np.isfinite(numeric)
    values = np.full(len(stripped), np.nan)
    values[valid] = stripped.to_numpy()[valid].astype(np.float64)
    n_blank = int(blank.sum())
    return values, n_blank, int((~valid).sum()) - n_blank


def _check_grid(frame: pd.DataFrame) -> None:
    """Raises if the frame is not a sorted, contiguous quarter-hourly grid."""
    if list(frame.index.names) != ["date", "qh"]:
        raise exceptions.InternalError("Panel index must be (date, qh).")
    if frame.index.has_duplicates:
        duplicated = frame.index[frame.index.duplicated()][:5].tolist()
        raise exceptions.IntegrityError(f"Duplicated delivery periods: {duplicated}.")
    if len(frame) == 0:
        raise exceptions.IntegrityError("Panel is empty.")
    quarter_hours = frame.index.get_level_values("qh")
    if ((quarter_hours < 1) | (quarter_hours > QH_PER_DAY)).any():
        raise exceptions.IntegrityError("Quarter-hours must lie in [1, 96].")
    dates = frame.index.get_level_values("date")
    expected = pd.MultiIndex.from_product(
        [
            pd.date_range(dates.min(), dates.max(), freq="D"),
            np.arange(1, QH_PER_DAY + 1),
        ],
        names=["date", "qh"],
    )
    if len(expected) != len(frame) or not expected.equals(frame.index):
        absent = expected.difference(frame.index)[:5].tolist()
        raise exceptions.IntegrityError(f"Panel grid has gaps, e.g. {absent}.")
    if not frame.index.is_monotonic_increasing:
        raise exceptions.InternalError("Panel index must be sorted.")


def _check_reserve_order(frame: pd.DataFrame) -> None:
    """Raises if a reserve price minimum exceeds its average or maximum."""
    for market in RESERVE_MARKETS:
        for side in SIDES:
            for kind in KINDS:
                names = [f"{market}_{side}_{kind}_{stat}" for stat in STATS]
                if not all(name in frame.columns for name in names):
                    continue
                low, mid, high = (frame[name].to_numpy() for name in names)
                present = ~(np.isnan(low) | np.isnan(mid) | np.isnan(high))
                if ((low[present] > mid[present]) | (mid[present] > high[present])).any():
                    raise exceptions.IntegrityError(
                        f"{market} {side} {kind} prices violate min <= avg <= max."
                    )


def _fill_daily(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward-fills a per-day column from the last observed day."""
    per_day = pd.Series(np.nanmax(np.where(np.isnan(matrix), -np.inf, matrix), axis=1))
    per_day[np.isinf(per_day)] = np.nan
    forward = per_day.ffill()
    methods_day = np.where(forward.isna(), "bfill", "ffill")
    filled_day = forward.bfill().to_numpy()
    filled = np.where(np.isnan(matrix), filled_day[:, None], matrix)
    methods = np.broadcast_to(methods_day[:, None], matrix.shape)
    return filled, methods


def _fill_quarter_hourly(matrix: np.ndarray, max_gap: int) -> tuple[np.ndarray, np.ndarray]:
    """Fills short runs by interpolation and long runs by weekly medians."""
    n_days = matrix.shape[0]
    series = matrix.reshape(-1).copy()
    methods = np.full(series.shape, "", dtype=object)
    missing = np.isnan(series)

    for start, stop in _missing_runs(missing):
        length = stop - start
        if length <= max_gap and start > 0 and stop < len(series):
            left, right = series[start - 1], series[stop]
            weights = np.arange(1, length + 1) / (length + 1)
            series[start:stop] = left + weights * (right - left)
            methods[start:stop] = "interpolate"
            continue
        for flat in range(start, stop):
            day_pos, qh_pos = divmod(flat, QH_PER_DAY)
            same_weekday = np.arange(day_pos % 7, n_days, 7)
            candidates = matrix[same_weekday[same_weekday != day_pos], qh_pos]
            candidates = candidates[~np.isnan(candidates)]
            method = "weekly_median"
            if candidates.size == 0:
                candidates = matrix[:, qh_pos][~np.isnan(matrix[:, qh_pos])]
                method = "qh_median"
            if candidates.size == 0:
                candidates = matrix[~np.isnan(matrix)]
                method = "column_median"
            series[flat] = float(np.median(candidates))
            methods[flat] = method
    return series.reshape(matrix.shape), methods.reshape(matrix.shape)


def _missing_runs(missing: np.ndarray) -> list[tuple[int, int]]:
    """Half-open (start, stop) pairs of consecutive True values."""
    padded = np.concatenate([[False], missing, [False]]).astype(np.int8)
    edges = np.diff(padded)
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def _distance_bounds(index: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Price bounds relative to the intraday index under under/oversupply."""
    lower = np.maximum(index * 1.25, index + 10.0)
    upper = np.minimum(index * 0.75, index - 10.0)
    return lower, upper


def _ar1(
    rng: np.random.Generator, n: int, phi: float, shocks: np.ndarray | None = None
) -> np.ndarray:
    """A zero-mean AR(1) path with unit-variance Gaussian or given shocks."""
    shocks = rng.standard_normal(n) if shocks is None else shocks
    path = np.empty(n)
    path[0] = shocks[0]
    innovation_scale = math.sqrt(1.0 - phi**2)
    for step in range(1, n):
        path[step] = phi * path[step - 1] + innovation_scale * shocks[step]
    return path


def _daily_shape(hour: np.ndarray) -> np.ndarray:
    """Two-peaked daily profile with a morning and an evening peak."""
    return (
        0.6 * np.exp(-(((hour - 8.0) / 2.5) ** 2))
        + np.exp(-(((hour - 19.0) / 2.5) ** 2))
        - 0.4
    )


def _synthetic_fundamentals(
    rng: np.random.Generator,
    day_of_year: np.ndarray,
    weekend: np.ndarray,
    hour_of_qh: np.ndarray,
) -> dict[str, np.ndarray]:
    n_days = day_of_year.size
    annual = np.cos(2 * np.pi * day_of_year / 365.0)
    load = (
        55000.0
        + 9000.0 * _daily_shape(hour_of_qh)[None, :]
        + 4000.0 * annual[:, None]
        - 6000.0 * weekend[:, None]
        + 800.0 * _ar1(rng, n_days * QH_PER_DAY, 0.95).reshape(n_days, QH_PER_DAY)
    )
    daylight = np.clip(np.sin(np.pi * (hour_of_qh - 6.0) / 12.0), 0.0, None)
    summer = 0.6 + 0.4 * np.cos(2 * np.pi * (day_of_year - 172.0) / 365.0)
    cloud = rng.uniform(0.4, 1.0, n_days)
    solar = 25000.0 * daylight[None, :] * (summer * cloud)[:, None]
    onshore_level = _ar1(rng, n_days, 0.7)
    offshore_level = _ar1(rng, n_days, 0.7)
    wind_wave = 1.0 + 0.1 * np.sin(2 * np.pi * hour_of_qh / 24.0)
    onshore = 12000.0 * np.exp(0.6 * onshore_level)[:, None] * wind_wave[None, :]
    offshore = 3000.0 * np.exp(0.5 * offshore_level)[:, None] * wind_wave[None, :]
    return {"Load": load, "WiOn": onshore, "WiOff": offshore, "Solar": solar}


def _synthetic_day_ahead(
    rng: np.random.Generator,
    config: SynthConfig,
    day_of_year: np.ndarray,
    weekend: np.ndarray,
    residual_load: np.ndarray,
) -> np.ndarray:
    n_days = day_of_year.size
    hours = np.arange(24, dtype=np.float64)
    hourly_residual = residual_load.reshape(n_days, 24, 4).mean(axis=2)
    hourly = (
        45.0
        + config.annual_amplitude * np.cos(2 * np.pi * day_of_year / 365.0)[:, None]
        + config.daily_amplitude * _daily_shape(hours)[None, :]
        - 8.0 * weekend[:, None]
        + 0.0008 * (hourly_residual - hourly_residual.mean())
        + config.noise_scale * _ar1(rng, n_days * 24, 0.9).reshape(n_days, 24)
    )
    return np.repeat(hourly, 4, axis=1)


def _synthetic_fair_values(
    rng: np.random.Generator, config: SynthConfig, day_ahead: np.ndarray
) -> np.ndarray:
    """Quarter-hourly intraday fair values around the hourly day-ahead price."""
    n_days = day_ahead.shape[0]
    hourly = day_ahead[:, ::4].reshape(-1)
    slope = np.gradient(hourly).reshape(n_days, 24)
    ramp = np.tile(np.array([-0.375, -0.125, 0.125, 0.375]), 24)[None, :]
    noise = _ar1(rng, n_days * QH_PER_DAY, 0.8).reshape(n_days, QH_PER_DAY)
    return day_ahead + np.repeat(slope, 4, axis=1) * ramp + 0.5 * config.noise_scale * noise


def _synthetic_transactions(
    rng: np.random.Generator,
    config: SynthConfig,
    days: pd.DatetimeIndex,
    fair: np.ndarray,
) -> pd.DataFrame:
    """Draws intraday trades for every hourly and quarter-hourly product."""
    n_days = fair.shape[0]
    hourly_fair = fair.reshape(n_days, 24, 4).mean(axis=2)
    product_fair = np.concatenate([hourly_fair, fair], axis=1).reshape(-1)
    n_products = product_fair.size
    product_type = np.tile(
        np.array(["H"] * 24 + ["QH"] * QH_PER_DAY, dtype=object), n_days
    )
    product_id = np.tile(
        np.concatenate([np.arange(1, 25), np.arange(1, QH_PER_DAY + 1)]), n_days
    )
    day_positions = np.repeat(np.arange(n_days), 24 + QH_PER_DAY)
    start_minutes = np.where(product_type == "H", 60 * (product_id - 1), 15 * (product_id - 1))
    drift = rng.normal(0.0, config.noise_scale, n_products)

    counts = rng.poisson(config.txn_rate * config.trading_hours, n_products)
    owner = np.repeat(np.arange(n_products), counts)
    n_trades = owner.size
    horizon = config.trading_hours * 60.0
    offset = 5.0 + (horizon - 5.0) * rng.uniform(0.0, 1.0, n_trades) ** 2
    offset_ms = np.round(offset * 60_000.0).astype(np.int64)
    price = (
        product_fair[owner]
        + drift[owner] * (offset / horizon)
        + rng.normal(0.0, 0.25 * config.noise_scale, n_trades)
    )
    volume = np.round(0.1 + rng.exponential(4.0, n_trades), 1)

    delivery_date = days[day_positions[owner]]
    delivery_start = delivery_date + pd.to_timedelta(start_minutes[owner], unit="min")
    exec_time = delivery_start - pd.to_timedelta(offset_ms, unit="ms")
    frame = pd.DataFrame(
        {
            "product_type": product_type[owner].astype(str),
            "product_id": product_id[owner].astype(np.int64),
            "delivery_date": delivery_date,
            "exec_time": exec_time,
            "price": price,
            "volume": volume,
        }
    )
    logger.debug("Generated %d synthetic trades.", n_trades)
    return validate_transactions(frame)


def _published_indices(
    transactions: pd.DataFrame,
    n_days: int,
    days: pd.DatetimeIndex,
    intraday_auction: np.ndarray,
) -> dict[str, np.ndarray]:
    """Full-window ID1, ID3 and ID-Index for every hourly and quarter-hourly product.

    Products without trades fall back to the ID-Index, then to the intraday
    auction price.
    """
    minutes_before = (
        delivery_starts(transactions) - transactions["exec_time"]
    ).dt.total_seconds().to_numpy() / 60.0
    weighted = transactions["price"].to_numpy() * transactions["volume"].to_numpy()
    day_pos = days.get_indexer(transactions["delivery_date"])
    hourly_auction = intraday_auction.reshape(n_days, 24, 4).mean(axis=2)
    out: dict[str, np.ndarray] = {}
    for suffix, n_products, fallback in (
        ("h", 24, hourly_auction),
        ("qh", QH_PER_DAY, intraday_auction),
    ):
        is_type = (transactions["product_type"] == ("H" if suffix == "h" else "QH")).to_numpy()
        cell = day_pos * n_products + transactions["product_id"].to_numpy() - 1
        windows = {"IDX": np.inf, "ID1": 60.0, "ID3": 180.0}
        matrices: dict[str, np.ndarray] = {}
        for name, window in windows.items():
            mask = is_type & (minutes_before <= window)
            numerator = np.bincount(
                cell[mask], weights=weighted[mask], minlength=n_days * n_products
            )
            denominator = np.bincount(
                cell[mask],
                weights=transactions["volume"].to_numpy()[mask],
                minlength=n_days * n_products,
            )
            with np.errstate(invalid="ignore", divide="ignore"):
                matrices[name] = (numerator / denominator).reshape(n_days, n_products)
        matrices["IDX"] = np.where(np.isnan(matrices["IDX"]), fallback, matrices["IDX"])
        for name in ("ID1", "ID3"):
            matrices[name] = np.where(np.isnan(matrices[name]), matrices["IDX"], matrices[name])
        for name, matrix in matrices.items():
            if suffix == "h":
                matrix = np.repeat(matrix, 4, axis=1)
            out[f"{name}_{suffix}"] = matrix
    return out


def _synthetic_reserves(
    rng: np.random.Generator, day_ahead: np.ndarray
) -> dict[str, np.ndarray]:
    """Bid statistics of the aFRR and mFRR capacity and energy markets."""
    n_days = day_ahead.shape[0]
    shape = day_ahead.shape
    level = {
        ("aFRR", "POS", "EN"): 40.0 + 0.6 * day_ahead,
        ("aFRR", "NEG", "EN"): -10.0 + 0.3 * day_ahead,
        ("mFRR", "POS", "EN"): 80.0 + 0.8 * day_ahead,
        ("mFRR", "NEG", "EN"): -30.0 + 0.2 * day_ahead,
    }
    out: dict[str, np.ndarray] = {}
    for market in RESERVE_MARKETS:
        for side in SIDES:
            for kind in KINDS:
                if kind == "CAP":
                    block = np.abs(rng.normal(6.0, 3.0, (n_days, 6)))
                    average = np.repeat(block, 16, axis=1)
                    low_spread = np.repeat(np.abs(rng.normal(0.0, 2.0, (n_days, 6))), 16, axis=1)
                    high_spread = np.repeat(np.abs(rng.normal(0.0, 8.0, (n_days, 6))), 16, axis=1)
                else:
                    average = level[(market, side, kind)] + rng.normal(0.0, 5.0, shape)
                    low_spread = 5.0 + np.abs(rng.normal(0.0, 15.0, shape))
                    high_spread = 10.0 + np.abs(rng.normal(0.0, 40.0, shape))
                prefix = f"{market}_{side}_{kind}"
                out[f"{prefix}_min"] = average - low_spread
                out[f"{prefix}_avg"] = average
                out[f"{prefix}_max"] = average + high_spread
    return out


def _synthetic_imbalance(
    rng: np.random.Generator, config: SynthConfig, n_days: int
) -> np.ndarray:
    """System imbalance in MWh; negative values mean undersupply."""
    shocks = rng.standard_t(config.tail_df, n_days * QH_PER_DAY)
    path = _ar1(rng, n_days * QH_PER_DAY, 0.85, shocks=shocks)
    return config.imbalance_scale * path.reshape(n_days, QH_PER_DAY)


def _settle(
    rng: np.random.Generator,
    config: SynthConfig,
    imbalance: np.ndarray,
    reserves: dict[str, np.ndarray],
    intraday_index: np.ndarray,
) -> np.ndarray:
    """Stylized imbalance settlement with the intraday distance rule and spikes."""
    counter_share = 0.1
    merit_depth = 300.0
    scarcity = 0.05
    afrr_share = 0.8

    short_depth = np.maximum(-imbalance, 0.0)
    long_depth = np.maximum(imbalance, 0.0)
    positive_energy = (1 + counter_share) * short_depth + counter_share * long_depth
    negative_energy = (1 + counter_share) * long_depth + counter_share * short_depth

    def activated_price(side: str, depth: np.ndarray) -> np.ndarray:
        fill = 1.0 - np.exp(-depth / merit_depth)
        price = np.zeros_like(depth)
        for market, share in (("aFRR", afrr_share), ("mFRR", 1.0 - afrr_share)):
            low = reserves[f"{market}_{side}_EN_min"]
            high = reserves[f"{market}_{side}_EN_max"]
            price += share * (low + (high - low) * fill)
        return price + scarcity * depth

    costs = positive_energy * activated_price("POS", short_depth)
    revenues = negative_energy * activated_price("NEG", long_depth)
    net_position = positive_energy - negative_energy
    with np.errstate(invalid="ignore", divide="ignore"):
        basic = np.where(
            net_position != 0,
            (costs - revenues) / net_position,
            activated_price("POS", short_depth),
        )
    basic = basic + config.noise_scale * rng.standard_t(config.tail_df, imbalance.shape)

    lower, upper = _distance_bounds(intraday_index)
    price = np.where(
        imbalance < 0,
        np.maximum(basic, lower),
        np.where(imbalance > 0, np.minimum(basic, upper), basic),
    )
    spikes = rng.uniform(0.0, 1.0, imbalance.shape) < config.spike_prob
    magnitude = config.spike_scale * np.abs(rng.standard_t(config.tail_df, imbalance.shape))
    direction = np.where(imbalance < 0, 1.0, -1.0)
    return price + spikes * direction * magnitude


def _synthetic_fuels(
    rng: np.random.Generator, n_days: int, weekend: np.ndarray
) -> dict[str, np.ndarray]:
    """Daily fuel and EUA settlement prices, missing on weekends."""
    out: dict[str, np.ndarray] = {}
    for name, start, volatility in (
        ("Coal", 80.0, 0.015),
        ("Gas", 20.0, 0.03),
        ("Oil", 65.0, 0.02),
        ("EUA", 25.0, 0.025),
    ):
        path = start * np.exp(np.cumsum(rng.normal(0.0, volatility, n_days)))
        path[weekend.astype(bool)] = np.nan
        out[name] = np.repeat(path[:, None], QH_PER_DAY, axis=1)
    return out
