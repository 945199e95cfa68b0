from datetime import datetime, timedelta, timezone
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from resq.coverage import (
    AreaCollection, AreaKind, ConstraintLimits, CostArea, RoadSegment, SlotTemplate, ViolationKind,
    area_from_dict, area_to_dict, build_areas, classify_area, dump_route, hankel_area, load_route,
    route_cost, trace_areas, validate_constraints,
)
from resq.errors import IndexOutOfBounds, MissingChoice, MissingSeries, UncoveredInterval
from resq.pricedata import PriceSeries

T0 = datetime(2021, 5, 3, tzinfo=timezone.utc)
MIN = timedelta(minutes=1)


def at(minutes):
    return T0 + minutes * MIN


def flat_series(key, n=60, seed=0):
    rng = np.random.default_rng(seed)
    return PriceSeries(key, T0, MIN, rng.integers(1, 10**6, size=n))


def seg(sid, a, b, *ops):
    return RoadSegment(sid, at(a), at(b), frozenset(ops))


def test_single_operator_is_disjoint():
    areas = build_areas([seg("s", 0, 10, "op1")], {"op1": flat_series("op1")}, SlotTemplate.uniform(3))
    assert len(areas) == 1
    (a,) = areas
    assert a.n_operators == 1 and a.kind is AreaKind.DISJOINT


def interval_sweep(intervals):
    """Independent oracle: walk every minute and group by active operator set."""
    lo = min(a for a, _, _ in intervals)
    hi = max(b for _, b, _ in intervals)
    runs = []
    for t in range(lo, hi):
        ops = frozenset(op for a, b, op in intervals if a <= t < b)
        if runs and runs[-1][2] == ops:
            runs[-1][1] = t + 1
        else:
            runs.append([t, t + 1, ops])
    return [(a, b, ops) for a, b, ops in runs]


def test_overlap_three_areas():
    route = [seg("s1", 0, 10, "op1"), seg("s2", 5, 15, "op2")]
    series = {"op1": flat_series("op1"), "op2": flat_series("op2", seed=1)}
    areas = build_areas(route, series, SlotTemplate.uniform(2))
    got = [((a.start - T0) // MIN, (a.end - T0) // MIN, frozenset(a.operators)) for a in areas]
    assert got == interval_sweep([(0, 10, "op1"), (5, 15, "op2")])
    assert got == [(0, 5, {"op1"}), (5, 10, {"op1", "op2"}), (10, 15, {"op2"})]
    assert [a.kind for a in areas] == [AreaKind.DISJOINT, AreaKind.OVERLAP, AreaKind.DISJOINT]


def test_missing_series():
    with pytest.raises(MissingSeries):
        build_areas([seg("s", 0, 10, "op1", "op9")], {"op1": flat_series("op1")}, SlotTemplate.uniform(2))


def test_gap_in_route_is_uncovered():
    route = [seg("s1", 0, 5, "op1"), seg("s2", 7, 10, "op1")]
    with pytest.raises(UncoveredInterval):
        build_areas(route, {"op1": flat_series("op1")}, SlotTemplate.uniform(2))


def test_trace_lookup_prices():
    s = flat_series("op1")
    (a,) = build_areas([seg("s", 3, 8, "op1")], {"op1": s}, SlotTemplate.uniform(4))
    assert a.shape == (5, 1, 4)
    for n in range(5):
        for r in range(4):
            assert a.prices_micro[n, 0, r] == s.prices_micro[3 + n + r]


@settings(deadline=None, max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 40), st.integers(1, 15), st.sampled_from(["a", "b", "c"])),
                min_size=1, max_size=6))
def test_partition_and_classification(raw):
    intervals = [(s, s + d, op) for s, d, op in raw]
    route = [seg(f"s{i}", a, b, op) for i, (a, b, op) in enumerate(intervals)]
    series = {k: flat_series(k, 120, seed=i) for i, k in enumerate("abc")}
    expected = interval_sweep(intervals)
    if any(not ops for _, _, ops in expected):
        with pytest.raises(UncoveredInterval):
            build_areas(route, series, SlotTemplate.uniform(2))
        return
    areas = build_areas(route, series, SlotTemplate.uniform(2))
    assert [((a.start - T0) // MIN, (a.end - T0) // MIN, frozenset(a.operators)) for a in areas] == expected
    # tiling: consecutive areas share endpoints exactly
    assert all(x.end == y.start for x, y in zip(areas.areas, areas.areas[1:]))
    for a in areas:
        assert classify_area(a) is a.kind
        assert (a.kind is AreaKind.DISJOINT) == (len(a.operators) == 1)


def _area(area_id, start, prices):
    p = np.asarray(prices, dtype=np.int64)
    return CostArea(area_id, at(start), at(start + p.shape[0]), tuple(f"op{i}" for i in range(p.shape[1])),
                    tuple(i * MIN for i in range(p.shape[2])), p)


def test_route_cost_two_areas():
    coll = AreaCollection((_area("A", 0, [[[300_000]]]), _area("B", 1, [[[200_000]]])))
    assert route_cost(coll, {"A": (0, 0, 0), "B": (0, 0, 0)}) == Decimal("0.5")


def test_route_cost_empty():
    assert route_cost(AreaCollection(()), {}) == 0


def test_route_cost_errors():
    coll = AreaCollection((_area("A", 0, [[[1]]]),))
    with pytest.raises(MissingChoice):
        route_cost(coll, {})
    with pytest.raises(IndexOutOfBounds):
        route_cost(coll, {"A": (1, 0, 0)})


def _random_areas(rng, count):
    areas, t = [], 0
    for i in range(count):
        n, m, r = rng.integers(1, 5, size=3)
        areas.append(_area(f"A{i}", t, rng.integers(0, 10**7, size=(n, m, r))))
        t += int(n)
    return areas


def test_route_cost_random_matches_scalar_loop():
    rng = np.random.default_rng(7)
    areas = _random_areas(rng, 5)
    choices = {a.area_id: tuple(int(rng.integers(0, d)) for d in a.shape) for a in areas}
    expected = Decimal(0)
    for a in areas:
        n, m, r = choices[a.area_id]
        expected += Decimal(int(a.prices_micro[n][m][r])) / Decimal(10**6)
    assert route_cost(AreaCollection(tuple(areas)), choices) == expected


def test_route_cost_permutation_and_concatenation():
    rng = np.random.default_rng(8)
    areas = _random_areas(rng, 6)
    choices = {a.area_id: (0, 0, 0) for a in areas}
    whole = route_cost(AreaCollection(tuple(areas)), choices)
    first = route_cost(AreaCollection(tuple(areas[:3])), {a.area_id: (0, 0, 0) for a in areas[:3]})
    second = route_cost(AreaCollection(tuple(areas[3:])), {a.area_id: (0, 0, 0) for a in areas[3:]})
    assert whole == first + second
    shuffled = dict(reversed(list(choices.items())))
    assert route_cost(AreaCollection(tuple(areas)), shuffled) == whole


def _feasible_setup():
    route = [seg("s1", 0, 10, "op1")]
    coll = AreaCollection((_area("A", 0, [[[300_000]]]), _area("B", 1, [[[200_000]]])))
    choices = {"A": (0, 0, 0), "B": (0, 0, 0)}
    limits = ConstraintLimits(at(-5), at(60), {("op0", "s1"): 10.0}, Decimal("1.0"))
    return route, coll, choices, limits


def test_constraints_feasible():
    route, coll, choices, limits = _feasible_setup()
    assert validate_constraints(coll, choices, limits, {"A": 1.0, "B": 1.0}, route) == []


def test_constraints_budget():
    route, coll, choices, limits = _feasible_setup()
    tight = ConstraintLimits(limits.t_min, limits.t_max, limits.capacity, Decimal("0.4"))
    v = validate_constraints(coll, choices, tight, {}, route)
    assert [x.kind for x in v] == [ViolationKind.BUDGET_EXCEEDED]


def test_constraints_capacity():
    route = [seg("s1", 0, 10, "op0")]
    coll = AreaCollection((_area("A", 0, [[[1]]]),))
    limits = ConstraintLimits(at(-5), at(60), {("op0", "s1"): 5.0}, Decimal("1.0"))
    v = validate_constraints(coll, {"A": (0, 0, 0)}, limits, {"A": 10.0}, route)
    assert [x.kind for x in v] == [ViolationKind.CAPACITY_EXCEEDED]


def test_constraints_toggle_each_predicate():
    base_route = [seg("s1", 0, 10, "op0")]
    coll = AreaCollection((_area("A", 0, [[[300_000]]]), _area("B", 1, [[[200_000]]])))
    ok_limits = ConstraintLimits(at(-5), at(60), {("op0", "s1"): 10.0}, Decimal("1.0"))
    choices = {"A": (0, 0, 0), "B": (0, 0, 0)}
    demands = {"A": 1.0, "B": 1.0}
    assert validate_constraints(coll, choices, ok_limits, demands, base_route) == []

    cases = {
        ViolationKind.INTERVAL_BOUNDS: dict(limits=ConstraintLimits(at(1), at(60), ok_limits.capacity, Decimal(1))),
        ViolationKind.CAPACITY_EXCEEDED: dict(demands={"A": 6.0, "B": 6.0}),
        ViolationKind.NOT_IN_COLLECTION: dict(choices={**choices, "Z": (0, 0, 0)}),
        ViolationKind.BUDGET_EXCEEDED: dict(limits=ConstraintLimits(at(-5), at(60), ok_limits.capacity, Decimal("0.45"))),
    }
    for kind, override in cases.items():
        args = dict(limits=ok_limits, demands=demands, choices=choices) | override
        v = validate_constraints(coll, args["choices"], args["limits"], args["demands"], base_route)
        assert [x.kind for x in v] == [kind], kind


def test_hankel_area_layout():
    seqs = np.arange(2 * 6).reshape(2, 6)
    a = hankel_area("h", seqs, 3, 4, ["x", "y"])
    assert a.shape == (3, 2, 4)
    assert a.prices_micro[2, 1, 3] == seqs[1, 5]
    assert a.prices_micro[0, 0, 0] == seqs[0, 0]


def test_trace_areas_within_ranges():
    series = {k: flat_series(k, 500, seed=i) for i, k in enumerate("abc")}
    areas = trace_areas(series, 50, seed=1)
    for a in areas:
        assert 8 <= a.n_sessions <= 32 and 8 <= a.n_slots <= 32 and a.n_operators == 3
        assert a.kind is AreaKind.OVERLAP
    assert [a.prices_micro.tolist() for a in trace_areas(series, 5, seed=1)] == \
        [a.prices_micro.tolist() for a in areas[:5]]


def test_area_and_route_json_round_trip():
    a = _area("A", 0, np.arange(2 * 3 * 4).reshape(2, 3, 4) * 1234)
    b = area_from_dict(area_to_dict(a))
    assert b.area_id == a.area_id and b.start == a.start and np.array_equal(b.prices_micro, a.prices_micro)
    route = [seg("s1", 0, 10, "op1", "op2")]
    assert load_route(dump_route(route)) == route
