from datetime import datetime, timedelta, timezone
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from resq.errors import BoundaryOutOfRange, EmptySelection, MalformedLine, NegativePrice
from resq.pricedata import (
    PriceSeries, SpotRecord, build_series, format_spot_csv, parse_spot_csv, split_series,
)

T0 = datetime(2021, 4, 17, tzinfo=timezone.utc)
HEADER = "timestamp,instance_type,zone,price\n"


def test_parse_single_line():
    recs = parse_spot_csv(HEADER + "2021-04-17T00:05:00Z,c5.large,us-west-1b,0.0312\n")
    assert recs == [SpotRecord(T0 + timedelta(minutes=5), "c5.large", "us-west-1b", Decimal("0.031200"))]
    assert recs[0].price == Decimal("0.0312")


def test_parse_empty_body():
    assert parse_spot_csv(HEADER) == []


def test_parse_malformed_reports_line():
    with pytest.raises(MalformedLine) as exc:
        parse_spot_csv(HEADER + "2021-04-17T00:05:00Z,c5.large,us-west-1b,0.1\nx,y,us-west-1c,abc\n")
    assert exc.value.line_no == 3


@pytest.mark.parametrize("line", [
    "2021-04-17T00:05:00Z,c5.large,us-west-1b",
    "2021-04-17T00:05:00Z,c5.large,us-west-1b,0.1,extra",
    "2021-04-17T00:05:00Z,c5.large,us-west-1b,abc",
    "2021-04-17 00:05:00,c5.large,us-west-1b,0.1",
    "yesterday,c5.large,us-west-1b,0.1",
])
def test_parse_rejects(line):
    with pytest.raises(MalformedLine):
        parse_spot_csv(HEADER + line + "\n")


def test_parse_negative_price():
    with pytest.raises(NegativePrice) as exc:
        parse_spot_csv(HEADER + "2021-04-17T00:05:00Z,c5.large,us-west-1b,-0.1\n")
    assert exc.value.line_no == 2


def test_parse_bad_header():
    with pytest.raises(MalformedLine):
        parse_spot_csv("time,type,zone,price\n")


def test_parse_offset_timestamp_normalised_to_utc():
    (rec,) = parse_spot_csv(HEADER + "2021-04-17T02:00:00+02:00,c5.large,z,1\n")
    assert rec.timestamp == T0


def _rec(sec, price, key=("c5.large", "us-west-1b")):
    return SpotRecord(T0 + timedelta(seconds=sec), key[0], key[1], Decimal(str(price)))


def test_build_series_forward_fill():
    # hand resample: 0s -> 0.5; 60s, 120s carry 0.5; 180s sees the 150s record
    s = build_series([_rec(0, 0.5), _rec(150, 0.7)], "c5.large@us-west-1b", timedelta(seconds=60))
    assert s.timestamps == [T0 + timedelta(seconds=60 * i) for i in range(4)]
    assert [p for _, p in s.points] == [Decimal("0.5"), Decimal("0.5"), Decimal("0.5"), Decimal("0.7")]


def test_build_series_single_record():
    s = build_series([_rec(0, 0.5)], "c5.large@us-west-1b")
    assert len(s) == 1


def test_build_series_empty_selection():
    with pytest.raises(EmptySelection):
        build_series([_rec(0, 0.5, ("m5.large", "us-west-1c"))], "c5.large@us-west-1b")


def test_build_series_duplicate_last_wins_and_unsorted_input():
    recs = [_rec(120, 0.9), _rec(0, 0.1), _rec(0, 0.2)]
    s = build_series(recs, "c5.large@us-west-1b")
    assert s.prices_micro.tolist() == [200_000, 200_000, 900_000]


record_lists = st.lists(
    st.tuples(st.integers(0, 5000), st.integers(0, 10**7)), min_size=1, max_size=40
)


@settings(deadline=None)
@given(record_lists, st.sampled_from([30, 60, 300]))
def test_build_series_uniform_spacing(raw, res_s):
    recs = [SpotRecord(T0 + timedelta(seconds=t), "a", "b", Decimal(p).scaleb(-6)) for t, p in raw]
    s = build_series(recs, "a@b", timedelta(seconds=res_s))
    ts = s.timestamps
    assert all(b - a == timedelta(seconds=res_s) for a, b in zip(ts, ts[1:]))
    assert ts[0] == min(r.timestamp for r in recs)
    assert ts[-1] >= max(r.timestamp for r in recs)
    # every grid value is the last observation at or before it (oracle: brute-force scan)
    ordered = sorted(enumerate(recs), key=lambda ir: (ir[1].timestamp, ir[0]))
    for t, p in s.points:
        last = [r for _, r in ordered if r.timestamp <= t][-1]
        assert p == last.price


@settings(deadline=None, max_examples=50)
@given(st.lists(
    st.tuples(st.integers(0, 10**6), st.sampled_from(["c5.large", "m5.xlarge"]),
              st.sampled_from(["us-west-1b", "us-west-1c"]), st.integers(0, 10**9)),
    max_size=30,
))
def test_csv_round_trip(rows):
    recs = [SpotRecord(T0 + timedelta(seconds=t), it, z, Decimal(p).scaleb(-6)) for t, it, z, p in rows]
    again = parse_spot_csv(format_spot_csv(recs))
    assert again == recs
    assert parse_spot_csv(format_spot_csv(again)) == again


def _series(n, seed=0):
    rng = np.random.default_rng(seed)
    return PriceSeries("k", T0, timedelta(minutes=1), rng.integers(0, 10**6, size=n))


def test_split_counts():
    s = _series(10)
    split = split_series(s, T0 + timedelta(minutes=6))
    assert len(split.train) == 6 and len(split.test) == 4


def test_split_boundary_before_first_point():
    with pytest.raises(BoundaryOutOfRange):
        split_series(_series(10), T0 - timedelta(minutes=1))
    with pytest.raises(BoundaryOutOfRange):
        split_series(_series(10), T0)
    with pytest.raises(BoundaryOutOfRange):
        split_series(_series(10), T0 + timedelta(minutes=10))


def test_split_partition_random_series():
    s = _series(1000, seed=3)
    boundary = T0 + timedelta(minutes=417, seconds=30)
    split = split_series(s, boundary)
    train, test = set(split.train.points), set(split.test.points)
    assert train | test == set(s.points)
    assert not train & test
    assert all(t < boundary for t, _ in split.train.points)
    assert all(t >= boundary for t, _ in split.test.points)


def test_series_csv_round_trip():
    s = _series(50)
    assert PriceSeries.from_csv(s.to_csv(), "k") == s
