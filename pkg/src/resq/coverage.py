"""Cost areas: mapping a driving route onto per-interval price tensors.

A cost area holds the quotes an operator set makes for one coverage interval,
indexed ``[session, operator, departure_slot]``. Prices are integer
micro-units, so route totals are exact.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import IndexOutOfBounds, MissingChoice, MissingSeries, UncoveredInterval
from .pricedata import MICRO, ONE_MINUTE, PriceSeries, format_timestamp, micro_to_money, parse_timestamp

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class AreaKind(enum.Enum):
    DISJOINT = "disjoint"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class RoadSegment:
    segment_id: str
    start: datetime
    end: datetime
    operators: frozenset[str]

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"segment {self.segment_id}: end must be after start")
        if not self.operators:
            raise ValueError(f"segment {self.segment_id}: no operators")
        object.__setattr__(self, "operators", frozenset(self.operators))


@dataclass(frozen=True, eq=False)
class CostArea:
    area_id: str
    start: datetime
    end: datetime
    operators: tuple[str, ...]
    slot_offsets: tuple[timedelta, ...]
    prices_micro: np.ndarray = field(repr=False)
    kind: AreaKind | None = None
    t_sv: timedelta = ONE_MINUTE

    def __post_init__(self):
        arr = np.asarray(self.prices_micro, dtype=np.int64).copy()
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"price tensor must be N x M x R with N,M,R >= 1, got {arr.shape}")
        if (arr < 0).any():
            raise ValueError("negative price in area")
        if self.end <= self.start:
            raise ValueError("area interval must have end after start")
        ops = tuple(self.operators)
        slots = tuple(self.slot_offsets)
        if arr.shape[1] != len(ops) or arr.shape[2] != len(slots):
            raise ValueError(
                f"tensor shape {arr.shape} does not match {len(ops)} operators x {len(slots)} slots"
            )
        kind = AreaKind.DISJOINT if len(ops) == 1 else AreaKind.OVERLAP
        if self.kind is not None and self.kind is not kind:
            raise ValueError(f"kind {self.kind} inconsistent with {len(ops)} operators")
        arr.setflags(write=False)
        object.__setattr__(self, "prices_micro", arr)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "slot_offsets", slots)
        object.__setattr__(self, "kind", kind)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.prices_micro.shape

    @property
    def n_sessions(self) -> int:
        return self.prices_micro.shape[0]

    @property
    def n_operators(self) -> int:
        return self.prices_micro.shape[1]

    @property
    def n_slots(self) -> int:
        return self.prices_micro.shape[2]

    @property
    def prices(self) -> np.ndarray:
        return self.prices_micro / MICRO

    @property
    def global_min_micro(self) -> int:
        return int(self.prices_micro.min())

    def price(self, n: int, m: int, r: int) -> Decimal:
        return micro_to_money(self.prices_micro[n, m, r])


def classify_area(area: CostArea) -> AreaKind:
    return AreaKind.DISJOINT if area.n_operators == 1 else AreaKind.OVERLAP


@dataclass(frozen=True)
class AreaCollection:
    areas: tuple[CostArea, ...]

    def __post_init__(self):
        areas = tuple(self.areas)
        for prev, cur in zip(areas, areas[1:]):
            if cur.start < prev.end:
                raise ValueError(f"areas {prev.area_id} and {cur.area_id} overlap or are out of order")
        ids = [a.area_id for a in areas]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate area ids")
        object.__setattr__(self, "areas", areas)

    def __len__(self):
        return len(self.areas)

    def __iter__(self):
        return iter(self.areas)

    def by_id(self) -> dict[str, CostArea]:
        return {a.area_id: a for a in self.areas}

    @property
    def disjoint(self) -> list[CostArea]:
        return [a for a in self.areas if a.kind is AreaKind.DISJOINT]

    @property
    def overlap(self) -> list[CostArea]:
        return [a for a in self.areas if a.kind is AreaKind.OVERLAP]


@dataclass(frozen=True)
class SlotTemplate:
    """Departure offsets quoted in every session, relative to the session time."""

    offsets: tuple[timedelta, ...]
    t_sv: timedelta = ONE_MINUTE
    max_sessions: int = 32

    @classmethod
    def uniform(cls, n_slots: int, t_sv: timedelta = ONE_MINUTE, max_sessions: int = 32) -> "SlotTemplate":
        return cls(tuple(i * t_sv for i in range(n_slots)), t_sv, max_sessions)


def _coverage_pieces(route: Sequence[RoadSegment]) -> list[tuple[datetime, datetime, tuple[str, ...]]]:
    """Sweep the route into maximal intervals with a constant operator set."""
    order: dict[str, int] = {}
    for seg in route:
        for op in sorted(seg.operators):
            order.setdefault(op, len(order))
    cuts = sorted({seg.start for seg in route} | {seg.end for seg in route})
    pieces: list[tuple[datetime, datetime, tuple[str, ...]]] = []
    for a, b in zip(cuts, cuts[1:]):
        active = set()
        for seg in route:
            if seg.start <= a and seg.end >= b:
                active |= seg.operators
        if not active:
            raise UncoveredInterval(f"no operator covers [{a}, {b})")
        ops = tuple(sorted(active, key=order.__getitem__))
        if pieces and pieces[-1][2] == ops:
            pieces[-1] = (pieces[-1][0], b, ops)
        else:
            pieces.append((a, b, ops))
    return pieces


def build_areas(
    route: Sequence[RoadSegment],
    series_by_mno: Mapping[str, PriceSeries],
    slots: SlotTemplate,
) -> AreaCollection:
    """Split a route into cost areas and fill their tensors from price traces.

    Session ``n`` of an area starting at ``tau_k`` is quoted at
    ``tau_k + n * t_sv``; its price for slot ``r`` is the trace price in force
    at the departure time ``tau_k + n * t_sv + offsets[r]``.
    """
    if not route:
        return AreaCollection(())
    for seg in route:
        for op in seg.operators:
            if op not in series_by_mno:
                raise MissingSeries(op)
    route_start = min(s.start for s in route)
    route_end = max(s.end for s in route)
    for op in {op for s in route for op in s.operators}:
        series = series_by_mno[op]
        if series.start > route_start or series.end < route_end:
            raise UncoveredInterval(f"series {op!r} does not span the route")

    areas = []
    for i, (a, b, ops) in enumerate(_coverage_pieces(route)):
        n_sessions = max(1, min(slots.max_sessions, int((b - a) // slots.t_sv)))
        prices = np.empty((n_sessions, len(ops), len(slots.offsets)), dtype=np.int64)
        for n in range(n_sessions):
            quote_time = a + n * slots.t_sv
            for m, op in enumerate(ops):
                for r, off in enumerate(slots.offsets):
                    prices[n, m, r] = series_by_mno[op].price_at(quote_time + off)
        areas.append(CostArea(f"A{i}", a, b, ops, slots.offsets, prices, t_sv=slots.t_sv))
    return AreaCollection(tuple(areas))


def hankel_area(
    area_id: str,
    sequences: np.ndarray,
    n_sessions: int,
    n_slots: int,
    operators: Sequence[str],
    start: datetime = EPOCH,
    t_sv: timedelta = ONE_MINUTE,
) -> CostArea:
    """Area whose quote for slot ``r`` in session ``n`` is ``sequences[m, n + r]``.

    This is the trace look-up rule of :func:`build_areas` with slots spaced one
    session apart, applied to per-operator minute sequences.
    """
    seq = np.asarray(sequences, dtype=np.int64)
    need = n_sessions + n_slots - 1
    if seq.ndim != 2 or seq.shape[1] < need:
        raise ValueError(f"need sequences of length >= {need}, got shape {seq.shape}")
    idx = np.arange(n_sessions)[:, None] + np.arange(n_slots)[None, :]
    prices = seq[:, idx].transpose(1, 0, 2)
    offsets = tuple(r * t_sv for r in range(n_slots))
    return CostArea(area_id, start, start + n_sessions * t_sv, tuple(operators), offsets, prices, t_sv=t_sv)


def trace_areas(
    series_by_mno: Mapping[str, PriceSeries],
    count: int,
    seed: int,
    sessions_range: tuple[int, int] = (8, 32),
    slots_range: tuple[int, int] = (8, 32),
    operators: Sequence[str] | None = None,
) -> list[CostArea]:
    """Random session groups cut from aligned real traces.

    Each area starts at a uniformly drawn minute of the common span; N and R
    are drawn uniformly (inclusive) from the given ranges.
    """
    ops = list(operators) if operators is not None else sorted(series_by_mno)
    if not ops:
        raise ValueError("no operators")
    for op in ops:
        if op not in series_by_mno:
            raise MissingSeries(op)
    res = {series_by_mno[op].resolution for op in ops}
    if len(res) != 1:
        raise ValueError("series resolutions differ")
    (t_sv,) = res
    common_start = max(series_by_mno[op].start for op in ops)
    common_end = min(series_by_mno[op].end for op in ops)
    span = int((common_end - common_start) // t_sv) + 1
    longest = sessions_range[1] + slots_range[1] - 1
    if span < longest:
        raise UncoveredInterval(f"common span of {span} points shorter than {longest}")
    first = {op: int((common_start - series_by_mno[op].start) // t_sv) for op in ops}

    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(sessions_range[0], sessions_range[1] + 1))
        r = int(rng.integers(slots_range[0], slots_range[1] + 1))
        off = int(rng.integers(0, span - (n + r - 1) + 1))
        seqs = np.stack(
            [series_by_mno[op].prices_micro[first[op] + off : first[op] + off + n + r - 1] for op in ops]
        )
        out.append(hankel_area(f"T{i}", seqs, n, r, ops, common_start + off * t_sv, t_sv))
    return out


def _resolve(collection: AreaCollection, choices: Mapping[str, tuple[int, int, int]]):
    areas = collection.by_id()
    unknown = set(choices) - set(areas)
    if unknown:
        raise ValueError(f"choices reference unknown areas {sorted(unknown)}")
    return areas


def _entry(area: CostArea, choice: tuple[int, int, int]) -> int:
    n, m, r = choice
    N, M, R = area.shape
    if not (0 <= n < N and 0 <= m < M and 0 <= r < R):
        raise IndexOutOfBounds(f"{choice} outside {area.area_id} shape {area.shape}")
    return int(area.prices_micro[n, m, r])


def route_cost(
    collection: AreaCollection,
    choices: Mapping[str, tuple[int, int, int]],
    fallback: Callable[[CostArea], Decimal] | None = None,
) -> Decimal:
    """Total reservation cost: one accepted entry per area, summed exactly.

    Areas without a choice use ``fallback(area)`` if given, else raise
    MissingChoice.
    """
    _resolve(collection, choices)
    total = Decimal(0)
    for area in collection:
        if area.area_id in choices:
            total += micro_to_money(_entry(area, choices[area.area_id]))
        elif fallback is not None:
            total += fallback(area)
        else:
            raise MissingChoice(area.area_id)
    return total


@dataclass(frozen=True)
class ConstraintLimits:
    t_min: datetime
    t_max: datetime
    capacity: Mapping[tuple[str, str], float]
    j_max: Decimal

    def __post_init__(self):
        if self.t_max <= self.t_min:
            raise ValueError("t_max must be after t_min")
        if any(c <= 0 for c in self.capacity.values()):
            raise ValueError("capacities must be positive")
        if Decimal(self.j_max) <= 0:
            raise ValueError("j_max must be positive")


class ViolationKind(enum.Enum):
    INTERVAL_BOUNDS = "IntervalBounds"
    CAPACITY_EXCEEDED = "CapacityExceeded"
    NOT_IN_COLLECTION = "NotInCollection"
    BUDGET_EXCEEDED = "BudgetExceeded"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str


def validate_constraints(
    collection: AreaCollection,
    choices: Mapping[str, tuple[int, int, int]],
    limits: ConstraintLimits,
    demands: Mapping[str, float],
    route: Sequence[RoadSegment] = (),
) -> list[Violation]:
    """Check a reservation plan against time, capacity, membership and budget limits.

    Demand of an area is charged to the operator of its chosen entry on every
    route segment of that operator overlapping the area. Capacity pairs with
    no entry in ``limits.capacity`` are unconstrained.
    """
    out: list[Violation] = []
    if len(collection):
        start, end = collection.areas[0].start, collection.areas[-1].end
        if start < limits.t_min or end > limits.t_max or end <= start:
            out.append(Violation(
                ViolationKind.INTERVAL_BOUNDS,
                f"route [{start}, {end}] outside [{limits.t_min}, {limits.t_max}]",
            ))

    areas = collection.by_id()
    valid: dict[str, tuple[int, int, int]] = {}
    for area_id, choice in choices.items():
        area = areas.get(area_id)
        if area is None:
            out.append(Violation(ViolationKind.NOT_IN_COLLECTION, f"unknown area {area_id!r}"))
            continue
        try:
            _entry(area, choice)
        except IndexOutOfBounds as exc:
            out.append(Violation(ViolationKind.NOT_IN_COLLECTION, str(exc)))
            continue
        valid[area_id] = choice

    load: dict[tuple[str, str], float] = {}
    for area_id, (_, m, _) in valid.items():
        area = areas[area_id]
        op = area.operators[m]
        for seg in route:
            if op in seg.operators and seg.start < area.end and area.start < seg.end:
                key = (op, seg.segment_id)
                load[key] = load.get(key, 0.0) + float(demands.get(area_id, 0.0))
    for key in sorted(load):
        cap = limits.capacity.get(key)
        if cap is not None and load[key] > cap:
            out.append(Violation(ViolationKind.CAPACITY_EXCEEDED, f"{key}: demand {load[key]} > {cap}"))

    total = sum((micro_to_money(_entry(areas[a], c)) for a, c in valid.items()), Decimal(0))
    if total > Decimal(limits.j_max):
        out.append(Violation(ViolationKind.BUDGET_EXCEEDED, f"cost {total} > {limits.j_max}"))
    return out


# -- JSON interfaces ---------------------------------------------------------

def load_route(text: str) -> list[RoadSegment]:
    raw = json.loads(text)
    if not isinstance(raw, list):
        raise ValueError("route file must be a JSON array of segments")
    return [
        RoadSegment(str(s["segment_id"]), parse_timestamp(s["start"]), parse_timestamp(s["end"]),
                    frozenset(s["operators"]))
        for s in raw
    ]


def dump_route(route: Sequence[RoadSegment]) -> str:
    return json.dumps([
        {"segment_id": s.segment_id, "start": format_timestamp(s.start),
         "end": format_timestamp(s.end), "operators": sorted(s.operators)}
        for s in route
    ], indent=2)


def area_to_dict(area: CostArea) -> dict:
    return {
        "area_id": area.area_id,
        "start": format_timestamp(area.start),
        "end": format_timestamp(area.end),
        "operators": list(area.operators),
        "slot_offsets_s": [int(o.total_seconds()) for o in area.slot_offsets],
        "t_sv_s": int(area.t_sv.total_seconds()),
        "kind": area.kind.value,
        "shape": list(area.shape),
        "prices": [p / MICRO for p in area.prices_micro.ravel().tolist()],
    }


def area_from_dict(d: Mapping) -> CostArea:
    shape = tuple(d["shape"])
    flat = np.array([round(p * MICRO) for p in d["prices"]], dtype=np.int64)
    if flat.size != int(np.prod(shape)):
        raise ValueError(f"area {d['area_id']}: {flat.size} prices for shape {shape}")
    return CostArea(
        d["area_id"], parse_timestamp(d["start"]), parse_timestamp(d["end"]),
        tuple(d["operators"]), tuple(timedelta(seconds=s) for s in d["slot_offsets_s"]),
        flat.reshape(shape), AreaKind(d["kind"]), timedelta(seconds=d.get("t_sv_s", 60)),
    )


def dump_areas(areas: Sequence[CostArea]) -> str:
    return json.dumps({"areas": [area_to_dict(a) for a in areas]})


def load_areas(text: str) -> list[CostArea]:
    return [area_from_dict(d) for d in json.loads(text)["areas"]]
