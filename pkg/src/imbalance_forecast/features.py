""" Regressors observable 30 minutes before delivery.

The feature layout is fixed. For delivery (d, qh) with cutoff c = delivery - 30 min:

| group           | count | names                           |
|-----------------|-------|---------------------------------|
| price indices   | 8     | DA, IA, ID1_h ... IDX_qh        |
| id15_h          | 24    | ID15_h01 ... ID15_h24           |
| id15_qh         | 96    | ID15_qh01 ... ID15_qh96         |
| did5            | 6     | dID5_30 ... dID5_55             |
| fundamentals_d  | 384   | Load_d_qh01 ... Solar_d_qh96    |
| fundamentals_d1 | 384   | Load_d1_qh01 ... Solar_d1_qh96  |
| imbalance       | 4     | Imb_lag4 ... Imb_lag7           |
| afrr, mfrr      | 24    | aFRR_POS_CAP_min ...            |
| fuels, eua      | 4     | Coal, Gas, Oil, EUA (day d-1)   |
| weekday         | 7     | DoW_1 (Monday) ... DoW_7        |
| splines         | 6     | S_1 ... S_6                     |

947 features in total. Intraday indices are volume-weighted averages over
windows that close at the cutoff of their own product: ID1 over [90, 30),
ID3 over [210, 30) and the ID-Index over all trades up to 30 minutes before
delivery. ID15 is the VWAP over [c - 15 min, c) of every product of day d.
dID5_x is xID5 - (x+5)ID5 for the target quarter-hour, where xIDy covers
[x + y, x) minutes before delivery. An empty window takes the most recent
earlier window of the same width that holds trades, else the day-ahead price.
"""
from __future__ import annotations

import dataclasses
import datetime
import logging
from collections import abc

import numpy as np
import pandas as pd
from scipy import interpolate

from imbalance_forecast import dataio, exceptions, logs

LOGGER_NAME = logs.LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)

SPLINE_BASIS = 6
YEAR_DAYS = 365.0
DELTA_OFFSETS = (30, 35, 40, 45, 50, 55)
INDEX_WINDOWS = {"ID1": (30, 60), "ID3": (30, 180), "IDX": (30, None)}

_MINUTE_NS = 60 * 1_000_000_000

GROUP_NAMES = (
    "da",
    "ia",
    "id1_h",
    "id3_h",
    "idx_h",
    "id1_qh",
    "id3_qh",
    "idx_qh",
    "id15_h",
    "id15_qh",
    "did5",
    "fundamentals_d",
    "fundamentals_d1",
    "imbalance",
    "afrr",
    "mfrr",
    "fuels",
    "eua",
    "weekday",
    "splines",
)


def _build_layout() -> tuple[tuple[str, ...], tuple[str, ...]]:
    layout: list[tuple[str, str]] = [
        ("DA", "da"),
        ("IA", "ia"),
        ("ID1_h", "id1_h"),
        ("ID3_h", "id3_h"),
        ("IDX_h", "idx_h"),
        ("ID1_qh", "id1_qh"),
        ("ID3_qh", "id3_qh"),
        ("IDX_qh", "idx_qh"),
    ]
    layout += [(f"ID15_h{hour:02d}", "id15_h") for hour in range(1, 25)]
    layout += [(f"ID15_qh{qh:02d}", "id15_qh") for qh in range(1, 97)]
    layout += [(f"dID5_{offset}", "did5") for offset in DELTA_OFFSETS]
    for suffix, group in (("d", "fundamentals_d"), ("d1", "fundamentals_d1")):
        layout += [
            (f"{column}_{suffix}_qh{qh:02d}", group)
            for column in dataio.FUNDAMENTAL_COLUMNS
            for qh in range(1, 97)
        ]
    layout += [(f"Imb_lag{lag}", "imbalance") for lag in range(4, 8)]
    layout += [
        (name, "afrr" if name.startswith("aFRR") else "mfrr")
        for name in dataio.RESERVE_COLUMNS
    ]
    layout += [("Coal", "fuels"), ("Gas", "fuels"), ("Oil", "fuels"), ("EUA", "eua")]
    layout += [(f"DoW_{day}", "weekday") for day in range(1, 8)]
    layout += [(f"S_{basis}", "splines") for basis in range(1, SPLINE_BASIS + 1)]
    names, groups = zip(*layout)
    return tuple(names), tuple(groups)


FEATURE_NAMES, FEATURE_GROUPS = _build_layout()
N_FEATURES = len(FEATURE_NAMES)


@dataclasses.dataclass(frozen=True, eq=False)
class FeatureVector:
    """Named regressors for one delivery period.

    Attributes:
        values: The regressor values.
        names: Unique regressor names, in layout order.
        cutoff: The time after which no input data was used.
    """

    values: np.ndarray
    names: tuple[str, ...]
    cutoff: pd.Timestamp

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "names", tuple(self.names))
        if self.values.shape != (len(self.names),):
            raise exceptions.InputError("Feature values and names differ in length.")
        if len(set(self.names)) != len(self.names):
            raise exceptions.InputError("Feature names are not unique.")


@dataclasses.dataclass(frozen=True)
class FeatureGroupMask:
    """Selects feature groups; every flag defaults to True."""

    da: bool = True
    ia: bool = True
    id1_h: bool = True
    id3_h: bool = True
    idx_h: bool = True
    id1_qh: bool = True
    id3_qh: bool = True
    idx_qh: bool = True
    id15_h: bool = True
    id15_qh: bool = True
    did5: bool = True
    fundamentals_d: bool = True
    fundamentals_d1: bool = True
    imbalance: bool = True
    afrr: bool = True
    mfrr: bool = True
    fuels: bool = True
    eua: bool = True
    weekday: bool = True
    splines: bool = True

    @classmethod
    def all_false(cls) -> FeatureGroupMask:
        """A mask that drops every feature."""
        return cls(**{name: False for name in GROUP_NAMES})

    @classmethod
    def from_dict(cls, flags: abc.Mapping[str, bool]) -> FeatureGroupMask:
        """Builds a mask from group flags; groups not mentioned stay selected."""
        unknown = set(flags) - set(GROUP_NAMES)
        if unknown:
            raise exceptions.InputError(f"Unknown feature groups: {sorted(unknown)}.")
        return cls(**{name: bool(value) for name, value in flags.items()})

    def to_dict(self) -> dict[str, bool]:
        """The flags by group name."""
        return dataclasses.asdict(self)

    def indices(self) -> np.ndarray:
        """Positions in the full layout of the selected features."""
        flags = self.to_dict()
        return np.array(
            [pos for pos, group in enumerate(FEATURE_GROUPS) if flags[group]],
            dtype=np.int64,
        )


class TransactionBook:
    """Read-only index of intraday trades for fast VWAP windows.

    Trades are grouped per product and sorted by execution time, with
    per-product cumulative sums of price times volume and of volume.
    """

    def __init__(
        self, transactions: pd.DataFrame | abc.Iterable[dataio.Transaction]
    ) -> None:
        if not isinstance(transactions, pd.DataFrame):
            transactions = dataio.transactions_to_frame(transactions)
        frame = dataio.validate_transactions(transactions)
        times = frame["exec_time"].to_numpy(dtype="datetime64[ns]").astype(np.int64)
        weighted = frame["price"].to_numpy() * frame["volume"].to_numpy()
        volume = frame["volume"].to_numpy(dtype=np.float64)
        self._products: dict[tuple[datetime.date, str, int], tuple[np.ndarray, ...]] = {}
        groups = frame.groupby(
            ["delivery_date", "product_type", "product_id"], sort=False
        ).indices
        for (delivery_date, product_type, product_id), rows in groups.items():
            key = (pd.Timestamp(delivery_date).date(), str(product_type), int(product_id))
            self._products[key] = (
                times[rows],
                np.concatenate([[0.0], np.cumsum(weighted[rows])]),
                np.concatenate([[0.0], np.cumsum(volume[rows])]),
            )
        self.n_transactions = len(frame)

    def _lookup(self, product: dataio.Product) -> tuple[np.ndarray, ...] | None:
        return self._products.get(
            (product.delivery_date, product.product_type.value, product.product_id)
        )

    def vwap(
        self, product: dataio.Product, start: pd.Timestamp | None, end: pd.Timestamp
    ) -> float:
        """VWAP of the trades executed in [start, end); NaN without trades.

        Args:
            product: The traded product.
            start: Window start, inclusive; None for an unbounded window.
            end: Window end, exclusive.
        """
        entry = self._lookup(product)
        if entry is None:
            return float("nan")
        times, cum_weighted, cum_volume = entry
        first = 0 if start is None else int(np.searchsorted(times, start.value, "left"))
        last = int(np.searchsorted(times, end.value, "left"))
        volume = cum_volume[last] - cum_volume[first]
        if last <= first or volume <= 0:
            return float("nan")
        return float((cum_weighted[last] - cum_weighted[first]) / volume)

    def last_vwap(
        self, product: dataio.Product, end: pd.Timestamp, width: pd.Timedelta
    ) -> float:
        """VWAP of the latest window [end - (k+1)w, end - kw) holding trades.

        Returns:
            The VWAP, or NaN if the product has no trade before `end`.
        """
        entry = self._lookup(product)
        if entry is None:
            return float("nan")
        times = entry[0]
        position = int(np.searchsorted(times, end.value, "left"))
        if position == 0:
            return float("nan")
        steps = (end.value - int(times[position - 1]) - 1) // width.value
        window_end = end - steps * width
        return self.vwap(product, window_end - width, window_end)


def vwap_index(
    transactions: TransactionBook | abc.Iterable[dataio.Transaction],
    product: dataio.Product | dataio.DeliveryIndex,
    x: float,
    y: float,
) -> float:
    """The xIDy price: VWAP of trades in [x + y, x) minutes before delivery.

    Args:
        transactions: A transaction book or plain transaction records.
        product: The product; a DeliveryIndex denotes its quarter-hourly product.
        x: Minutes before delivery at which the window closes, x >= 0.
        y: Window length in minutes, y > 0.

    Returns:
        The VWAP, or NaN if no trade falls in the window.
    """
    if x < 0 or y <= 0:
        raise exceptions.InputError("vwap_index needs x >= 0 and y > 0.")
    if isinstance(product, dataio.DeliveryIndex):
        product = dataio.Product.quarter_hourly(product)
    start = product.delivery_start - pd.Timedelta(minutes=x + y)
    end = product.delivery_start - pd.Timedelta(minutes=x)
    if isinstance(transactions, TransactionBook):
        return transactions.vwap(product, start, end)

    weighted = 0.0
    volume = 0.0
    for txn in transactions:
        if txn.product == product and start <= txn.exec_time < end:
            weighted += txn.price * txn.volume
            volume += txn.volume
    return weighted / volume if volume > 0 else float("nan")


def periodic_bspline_basis(
    day_of_year: float | np.ndarray, n_basis: int = SPLINE_BASIS, period: float = YEAR_DAYS
) -> np.ndarray:
    """Cubic periodic B-spline basis with equidistant knots on the annual circle.

    Args:
        day_of_year: One or more times in days; wrapped into [0, period).
        n_basis: Number of basis functions, at least 4.
        period: Length of the cycle in days.

    Returns:
        An array with a trailing axis of length `n_basis`.
    """
    if n_basis < 4:
        raise exceptions.InputError("A cubic periodic basis needs at least 4 functions.")
    times = np.mod(np.asarray(day_of_year, dtype=np.float64), period)
    width = period / n_basis
    values = np.zeros(times.shape + (n_basis,))
    for basis in range(n_basis):
        element = interpolate.BSpline.basis_element(
            width * np.arange(basis, basis + 5, dtype=np.float64), extrapolate=False
        )
        for shift in (0.0, period):
            values[..., basis] += np.nan_to_num(element(times + shift))
    return values


def weekday_dummies(day: datetime.date) -> np.ndarray:
    """Seven indicators, Monday first."""
    dummies = np.zeros(7)
    dummies[day.weekday()] = 1.0
    return dummies


def index_prices(
    book: TransactionBook, product: dataio.Product, fallback: float
) -> dict[str, float]:
    """Observable ID1, ID3 and ID-Index of a product.

    Args:
        book: The transactions.
        product: The product.
        fallback: Price used when the product has no trade before its cutoff.

    Returns:
        The three indices keyed by ID1, ID3 and IDX.
    """
    start = product.delivery_start
    out = {}
    for name, (close, length) in INDEX_WINDOWS.items():
        end = start - pd.Timedelta(minutes=close)
        if length is None:
            value = book.vwap(product, None, end)
        else:
            value = _observed_vwap(book, product, end - pd.Timedelta(minutes=length), end)
        out[name] = fallback if np.isnan(value) else value
    return out


def assemble_features(
    panel: dataio.MarketPanel,
    transactions: TransactionBook | abc.Iterable[dataio.Transaction],
    delivery: dataio.DeliveryIndex,
) -> FeatureVector:
    """Builds the full feature vector of a delivery period.

    Args:
        panel: Market panel covering the delivery day and the day before.
        transactions: Intraday transactions, as a book or as records.
        delivery: The delivery period.

    Returns:
        The 947 regressors, computed from data observed before the cutoff.
    """
    book = (
        transactions
        if isinstance(transactions, TransactionBook)
        else TransactionBook(transactions)
    )
    source = _FeatureSource(panel, book)
    return FeatureVector(source.row(delivery), FEATURE_NAMES, delivery.cutoff)


def apply_group_mask(vector: FeatureVector, mask: FeatureGroupMask) -> FeatureVector:
    """Keeps the features of the selected groups, in layout order."""
    if vector.names != FEATURE_NAMES:
        raise exceptions.InputError("Group masks apply to the full feature layout only.")
    keep = mask.indices()
    return FeatureVector(
        vector.values[keep], tuple(FEATURE_NAMES[pos] for pos in keep), vector.cutoff
    )


def build_feature_matrix(
    panel: dataio.MarketPanel,
    book: TransactionBook,
    deliveries: abc.Iterable[dataio.DeliveryIndex],
) -> pd.DataFrame:
    """Feature vectors of many delivery periods as a table.

    Returns:
        One row per delivery, indexed by (date, qh), one column per feature.
    """
    source = _FeatureSource(panel, book)
    deliveries = list(deliveries)
    rows = np.empty((len(deliveries), N_FEATURES))
    for position, delivery in enumerate(deliveries):
        rows[position] = source.row(delivery)
    logger.debug("Assembled %d feature vectors.", len(deliveries))
    index = pd.MultiIndex.from_arrays(
        [
            pd.to_datetime([delivery.day for delivery in deliveries]),
            np.array([delivery.qh for delivery in deliveries], dtype=np.int64),
        ],
        names=["date", "qh"],
    )
    return pd.DataFrame(rows, index=index, columns=list(FEATURE_NAMES))


def _observed_vwap(
    book: TransactionBook,
    product: dataio.Product,
    start: pd.Timestamp,
    end: pd.Timestamp,
) -> float:
    value = book.vwap(product, start, end)
    if np.isnan(value):
        value = book.last_vwap(product, start, end - start)
    return value


class _FeatureSource:
    """Panel columns as day-by-quarter-hour arrays, read once per batch."""

    def __init__(self, panel: dataio.MarketPanel, book: TransactionBook) -> None:
        needed = (
            ("DA", "IA", "Imb")
            + dataio.FUNDAMENTAL_COLUMNS
            + dataio.RESERVE_COLUMNS
            + dataio.DAILY_COLUMNS
        )
        absent = [name for name in needed if name not in panel.columns]
        if absent:
            raise exceptions.SchemaError(f"Panel lacks feature columns: {absent}.")
        self.panel = panel
        self.book = book
        self.matrices = {name: panel.matrix(name) for name in needed}

    def row(self, delivery: dataio.DeliveryIndex) -> np.ndarray:
        previous_day = delivery.day - datetime.timedelta(days=1)
        if not self.panel.has_day(previous_day):
            raise exceptions.InsufficientHistoryError(
                f"Features for {delivery.day} need the previous day {previous_day}."
            )
        day = self.panel.position(delivery.day)
        qh = delivery.qh - 1
        day_ahead = self.matrices["DA"][day]
        cutoff = delivery.cutoff
        recent = pd.Timedelta(minutes=15)

        hourly = dataio.Product.hourly(delivery)
        quarter = dataio.Product.quarter_hourly(delivery)
        hourly_index = index_prices(self.book, hourly, day_ahead[qh])
        quarter_index = index_prices(self.book, quarter, day_ahead[qh])
        values: list[float] = [
            day_ahead[qh],
            self.matrices["IA"][day, qh],
            hourly_index["ID1"],
            hourly_index["ID3"],
            hourly_index["IDX"],
            quarter_index["ID1"],
            quarter_index["ID3"],
            quarter_index["IDX"],
        ]

        for hour in range(1, 25):
            product = dataio.Product(dataio.ProductType.HOURLY, hour, delivery.day)
            values.append(
                self._recent(product, cutoff - recent, cutoff, day_ahead[4 * (hour - 1)])
            )
        for number in range(1, 97):
            product = dataio.Product(dataio.ProductType.QUARTER_HOURLY, number, delivery.day)
            values.append(self._recent(product, cutoff - recent, cutoff, day_ahead[number - 1]))

        start = quarter.delivery_start
        five = pd.Timedelta(minutes=5)
        for offset in DELTA_OFFSETS:
            close = start - pd.Timedelta(minutes=offset)
            later = self._recent(quarter, close - five, close, day_ahead[qh])
            earlier = self._recent(quarter, close - 2 * five, close - five, day_ahead[qh])
            values.append(later - earlier)

        for position in (day, day - 1):
            for column in dataio.FUNDAMENTAL_COLUMNS:
                values.extend(self.matrices[column][position])

        imbalance = self.matrices["Imb"].reshape(-1)
        flat = day * dataio.QH_PER_DAY + qh
        values.extend(imbalance[flat - lag] for lag in range(4, 8))

        values.extend(self.matrices[name][day, qh] for name in dataio.RESERVE_COLUMNS)
        values.extend(self._previous_daily(name, day) for name in dataio.DAILY_COLUMNS)
        values.extend(weekday_dummies(delivery.day))
        values.extend(periodic_bspline_basis(_day_of_year(delivery.day)))
        return np.asarray(values, dtype=np.float64)

    def _recent(
        self,
        product: dataio.Product,
        start: pd.Timestamp,
        end: pd.Timestamp,
        fallback: float,
    ) -> float:
        value = _observed_vwap(self.book, product, start, end)
        return fallback if np.isnan(value) else value

    def _previous_daily(self, column: str, day: int) -> float:
        """Last observed per-day value strictly before the delivery day."""
        daily = self.matrices[column][:day, 0]
        observed = np.flatnonzero(~np.isnan(daily))
        return float(daily[observed[-1]]) if observed.size else float("nan")


def _day_of_year(day: datetime.date) -> float:
    return float((day - datetime.date(day.year, 1, 1)).days)
