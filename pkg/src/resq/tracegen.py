"""Synthetic spot-price traces standing in for recorded market data.

Each operator follows a mean-reverting log-price with occasional jumps;
like real spot feeds, a record is emitted only when the price changes.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from decimal import Decimal

import numpy as np

from .pricedata import SpotRecord, to_money

DEFAULT_START = datetime(2021, 4, 17, tzinfo=timezone.utc)
DEFAULT_FEEDS = (
    ("c5.large", "us-west-1b"),
    ("c5.large", "us-west-1c"),
    ("m5.large", "us-west-1b"),
)


@dataclass(frozen=True)
class TraceParams:
    level: float = 50.0          # long-run mean price, money units
    level_spread: float = 0.15   # relative spread of per-operator levels
    reversion: float = 0.03      # per-minute pull of log-price towards its level
    volatility: float = 0.10     # per-minute log-price shock
    jump_prob: float = 0.02      # chance per minute of a jump
    jump_scale: float = 0.4      # std of log jump size
    hold_prob: float = 0.3       # chance per minute that the quote stays unchanged


def simulate_log_prices(minutes: int, rng: np.random.Generator, p: TraceParams) -> np.ndarray:
    x = np.empty(minutes)
    cur = rng.normal(0.0, p.volatility / np.sqrt(2 * p.reversion))
    for t in range(minutes):
        shock = p.volatility * rng.standard_normal()
        if rng.random() < p.jump_prob:
            shock += p.jump_scale * rng.standard_normal()
        nxt = (1.0 - p.reversion) * cur + shock
        if rng.random() >= p.hold_prob:
            cur = nxt
        x[t] = cur
    return x


def simulate_spot_records(
    minutes: int,
    seed: int,
    feeds=DEFAULT_FEEDS,
    start: datetime = DEFAULT_START,
    params: TraceParams = TraceParams(),
) -> list[SpotRecord]:
    """Change-point records for every feed, sorted by time then feed."""
    rng = np.random.default_rng(seed)
    out = []
    for instance_type, zone in feeds:
        level = params.level * np.exp(params.level_spread * rng.standard_normal())
        prices = level * np.exp(simulate_log_prices(minutes, rng, params))
        last = None
        for t, p in enumerate(prices):
            money = to_money(Decimal(repr(float(p))))
            if money != last:
                out.append(SpotRecord(start + timedelta(minutes=t), instance_type, zone, money))
                last = money
    out.sort(key=lambda r: (r.timestamp, r.instance_type, r.zone))
    return out
