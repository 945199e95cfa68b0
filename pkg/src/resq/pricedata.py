"""Spot-price ingestion: CSV records -> uniform per-operator price series.

Money enters as text and is held as an exact decimal with six fractional
digits. Series store prices as integer micro-units so that sums stay exact
while remaining cheap to slice with numpy.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation, ROUND_HALF_EVEN
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import BoundaryOutOfRange, EmptySelection, MalformedLine, NegativePrice

HEADER = ["timestamp", "instance_type", "zone", "price"]
SERIES_HEADER = ["timestamp", "price"]
MICRO = 1_000_000
_QUANTUM = Decimal("0.000001")
ONE_MINUTE = timedelta(minutes=1)


def to_money(value) -> Decimal:
    """Quantize to six fractional digits."""
    return Decimal(value).quantize(_QUANTUM, rounding=ROUND_HALF_EVEN)


def money_to_micro(price: Decimal) -> int:
    return int(price.scaleb(6).to_integral_value(rounding=ROUND_HALF_EVEN))


def micro_to_money(micro: int) -> Decimal:
    return Decimal(int(micro)).scaleb(-6).quantize(_QUANTUM)


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError("timestamp has no UTC offset")
    if ts.microsecond:
        raise ValueError("sub-second timestamp")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class SpotRecord:
    timestamp: datetime
    instance_type: str
    zone: str
    price: Decimal

    @property
    def mno_key(self) -> str:
        return mno_key(self.instance_type, self.zone)


def mno_key(instance_type: str, zone: str) -> str:
    return f"{instance_type}@{zone}"


def parse_spot_csv(text: str | TextIO) -> list[SpotRecord]:
    """Parse ``timestamp,instance_type,zone,price`` rows.

    Raises MalformedLine / NegativePrice carrying the 1-based line number
    (the header is line 1).
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedLine(1, "missing header") from None
    if [h.strip() for h in header] != HEADER:
        raise MalformedLine(1, f"expected header {','.join(HEADER)}")

    records = []
    for row in reader:
        line_no = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise MalformedLine(line_no, f"expected 4 fields, got {len(row)}")
        ts_text, instance_type, zone, price_text = (c.strip() for c in row)
        try:
            ts = parse_timestamp(ts_text)
        except ValueError as exc:
            raise MalformedLine(line_no, f"bad timestamp: {exc}") from None
        try:
            price = Decimal(price_text)
        except InvalidOperation:
            raise MalformedLine(line_no, f"bad price {price_text!r}") from None
        if not price.is_finite():
            raise MalformedLine(line_no, f"bad price {price_text!r}")
        if price < 0:
            raise NegativePrice(line_no)
        if not instance_type or not zone:
            raise MalformedLine(line_no, "empty key field")
        records.append(SpotRecord(ts, instance_type, zone, to_money(price)))
    return records


def format_spot_csv(records: Iterable[SpotRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow([format_timestamp(r.timestamp), r.instance_type, r.zone, f"{r.price:f}"])
    return out.getvalue()


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Uniformly spaced price feed of one operator.

    Point ``i`` sits at ``start + i * resolution``; prices are micro-units.
    """

    mno_key: str
    start: datetime
    resolution: timedelta
    prices_micro: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.prices_micro, dtype=np.int64).copy()
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("price series needs at least one point")
        if (arr < 0).any():
            raise ValueError("negative price in series")
        if self.resolution <= timedelta(0):
            raise ValueError("resolution must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "prices_micro", arr)

    def __len__(self):
        return self.prices_micro.size

    def __eq__(self, other):
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return (
            self.mno_key == other.mno_key
            and self.start == other.start
            and self.resolution == other.resolution
            and np.array_equal(self.prices_micro, other.prices_micro)
        )

    __hash__ = None

    @property
    def end(self) -> datetime:
        return self.start + (len(self) - 1) * self.resolution

    @property
    def timestamps(self) -> list[datetime]:
        return [self.start + i * self.resolution for i in range(len(self))]

    @property
    def values(self) -> np.ndarray:
        """Prices as floats (for the learner only)."""
        return self.prices_micro / MICRO

    @property
    def points(self) -> list[tuple[datetime, Decimal]]:
        return [(t, micro_to_money(p)) for t, p in zip(self.timestamps, self.prices_micro)]

    def index_at(self, ts: datetime) -> int:
        """Index of the last point at or before ``ts``."""
        if ts < self.start:
            raise ValueError(f"{ts} precedes series start {self.start}")
        return min(int((ts - self.start) // self.resolution), len(self) - 1)

    def price_at(self, ts: datetime) -> int:
        """Micro-unit price in force at ``ts`` (carried forward past the end)."""
        return int(self.prices_micro[self.index_at(ts)])

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for t, p in self.points:
            writer.writerow([format_timestamp(t), f"{p:f}"])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, mno_key: str, resolution: timedelta = ONE_MINUTE) -> "PriceSeries":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != SERIES_HEADER:
            raise MalformedLine(1, "expected header timestamp,price")
        stamps, prices = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise MalformedLine(reader.line_num, "expected 2 fields")
            try:
                stamps.append(parse_timestamp(row[0]))
                prices.append(money_to_micro(to_money(row[1])))
            except (ValueError, InvalidOperation):
                raise MalformedLine(reader.line_num, "unparseable point") from None
        if not stamps:
            raise EmptySelection("series file has no points")
        for i, t in enumerate(stamps):
            if t != stamps[0] + i * resolution:
                raise MalformedLine(i + 2, "series is not uniformly spaced")
        return cls(mno_key, stamps[0], resolution, np.array(prices, dtype=np.int64))


@dataclass(frozen=True)
class DataSplit:
    train: PriceSeries
    test: PriceSeries
    boundary: datetime


def build_series(
    records: Sequence[SpotRecord], mno_key: str, resolution: timedelta = ONE_MINUTE
) -> PriceSeries:
    """Resample one operator's records onto a uniform grid.

    Last observation is carried forward; the grid starts at the first
    observation and ends at the first grid point at or after the last one.
    Among records sharing a timestamp the later row wins.
    """
    selected = [r for r in records if r.mno_key == mno_key]
    if not selected:
        raise EmptySelection(f"no records for {mno_key!r}")
    # stable sort keeps file order among equal timestamps
    selected.sort(key=lambda r: r.timestamp)
    start = selected[0].timestamp
    offsets = np.array([(r.timestamp - start) / resolution for r in selected], dtype=float)
    prices = np.array([money_to_micro(r.price) for r in selected], dtype=np.int64)

    n_points = int(math.ceil(offsets[-1])) + 1 if offsets[-1] > 0 else 1
    grid = np.arange(n_points, dtype=float)
    # side="right" picks the last record with offset <= grid point
    idx = np.searchsorted(offsets, grid, side="right") - 1
    return PriceSeries(mno_key, start, resolution, prices[idx])


def split_series(series: PriceSeries, boundary: datetime) -> DataSplit:
    if not (series.start < boundary <= series.end):
        raise BoundaryOutOfRange(
            f"boundary {boundary} not inside ({series.start}, {series.end}]"
        )
    n_train = int(math.ceil((boundary - series.start) / series.resolution))
    train = PriceSeries(series.mno_key, series.start, series.resolution, series.prices_micro[:n_train])
    test = PriceSeries(
        series.mno_key,
        series.start + n_train * series.resolution,
        series.resolution,
        series.prices_micro[n_train:],
    )
    return DataSplit(train, test, boundary)


def load_series_by_mno(
    records: Sequence[SpotRecord], resolution: timedelta = ONE_MINUTE
) -> dict[str, PriceSeries]:
    keys = sorted({r.mno_key for r in records})
    return {k: build_series(records, k, resolution) for k in keys}
