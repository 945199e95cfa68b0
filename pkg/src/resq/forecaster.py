"""Price models that generate synthetic cost areas for pre-training.

Any object implementing :class:`ForecastModel` can feed the synthetic phase.
The default :class:`BootstrapModel` stitches together contiguous blocks of
the real training series, which keeps short-range price dynamics intact.
"""
from __future__ import annotations

import abc
import hashlib
import json
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Mapping, Sequence

import numpy as np

from .coverage import CostArea, hankel_area
from .errors import EmptyHistory, SeriesTooShort, Unfitted
from .pricedata import ONE_MINUTE, PriceSeries, format_timestamp, parse_timestamp

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SyntheticAreaConfig:
    sessions_range: tuple[int, int] = (8, 32)
    slots_range: tuple[int, int] = (8, 32)
    operators: int = 3
    t_sv: timedelta = ONE_MINUTE
    seed: int = 0

    def __post_init__(self):
        for name in ("sessions_range", "slots_range"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must satisfy 1 <= min <= max, got {(lo, hi)}")
        if self.operators < 1:
            raise ValueError("operators must be >= 1")


def series_fingerprint(series: Mapping[str, PriceSeries]) -> str:
    h = hashlib.sha256()
    for key in sorted(series):
        s = series[key]
        h.update(key.encode())
        h.update(format_timestamp(s.start).encode())
        h.update(str(int(s.resolution.total_seconds())).encode())
        h.update(s.prices_micro.astype("<i8").tobytes())
    return h.hexdigest()


class ForecastModel(abc.ABC):
    """Interface for Phase-1 generators."""

    fitted: bool = False
    fingerprint: str | None = None

    @abc.abstractmethod
    def sample_area(self, cfg: SyntheticAreaConfig, seed: int, area_id: str = "S0") -> CostArea:
        ...

    @abc.abstractmethod
    def forecast_next(self, history: Sequence[float], horizon: int, mno_key: str | None = None) -> np.ndarray:
        ...


@dataclass(eq=False)
class BootstrapModel(ForecastModel):
    series: dict[str, PriceSeries] = field(default_factory=dict)
    block_len: int = 16
    jitter: float = 0.0
    fitted: bool = False
    fingerprint: str | None = None

    def _check_fitted(self):
        if not self.fitted:
            raise Unfitted("model must be fitted before sampling")

    def _stitch(self, source: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
        chunks, have = [], 0
        n_starts = source.size - self.block_len + 1
        while have < length:
            s = int(rng.integers(0, n_starts))
            take = min(self.block_len, length - have)
            chunks.append(source[s : s + take])
            have += take
        return np.concatenate(chunks)

    def _jittered(self, seq: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.jitter == 0:
            return seq
        noise = 1.0 + self.jitter * rng.uniform(-1.0, 1.0, size=seq.shape)
        return np.maximum(np.rint(seq * noise), 0).astype(np.int64)

    def sample_area(self, cfg: SyntheticAreaConfig, seed: int, area_id: str = "S0") -> CostArea:
        """Draw one synthetic area.

        N and R are uniform over the configured ranges; each operator's minute
        sequence is stitched from uniformly placed blocks of its source series.
        When the config asks for more operators than the model holds, sources
        are reused round-robin.
        """
        self._check_fitted()
        rng = np.random.default_rng(seed)
        n = int(rng.integers(cfg.sessions_range[0], cfg.sessions_range[1] + 1))
        r = int(rng.integers(cfg.slots_range[0], cfg.slots_range[1] + 1))
        keys = sorted(self.series)
        ops = [keys[i % len(keys)] for i in range(cfg.operators)]
        length = n + r - 1
        seqs = np.stack([
            self._jittered(self._stitch(self.series[k].prices_micro, length, rng), rng) for k in ops
        ])
        names = [f"{k}#{i}" if ops.count(k) > 1 else k for i, k in enumerate(ops)]
        return hankel_area(area_id, seqs, n, r, names, t_sv=cfg.t_sv)

    def forecast_next(self, history: Sequence[float], horizon: int, mno_key: str | None = None) -> np.ndarray:
        """Continue ``history`` by ``horizon`` steps from its nearest source match.

        The last ``min(len(history), block_len)`` values are matched by squared
        distance against every window of the source(s) that still has
        ``horizon`` points after it; ties go to the earliest window.
        """
        self._check_fitted()
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        hist = np.asarray(history, dtype=float)
        if hist.size == 0:
            raise EmptyHistory("history is empty")
        width = min(hist.size, self.block_len)
        suffix = hist[-width:]
        keys = [mno_key] if mno_key is not None else sorted(self.series)

        best = None
        for key in keys:
            src = self.series[key].values
            n_pos = src.size - width - horizon + 1
            if n_pos < 1:
                continue
            windows = np.lib.stride_tricks.sliding_window_view(src, width)[:n_pos]
            dist = ((windows - suffix) ** 2).sum(axis=1)
            i = int(np.argmin(dist))
            if best is None or dist[i] < best[0]:
                best = (dist[i], key, i)
        if best is None:
            raise SeriesTooShort(f"no source window leaves room for horizon {horizon}")
        _, key, i = best
        out = self.series[key].values[i + width : i + width + horizon]
        if self.jitter:
            rng = np.random.default_rng(i)
            out = np.maximum(out * (1.0 + self.jitter * rng.uniform(-1.0, 1.0, size=out.shape)), 0.0)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "version": MODEL_FORMAT_VERSION,
            "kind": "bootstrap",
            "block_len": self.block_len,
            "jitter": self.jitter,
            "fingerprint": self.fingerprint,
            "series": {
                k: {"start": format_timestamp(s.start),
                    "resolution_s": int(s.resolution.total_seconds()),
                    "prices_micro": s.prices_micro.tolist()}
                for k, s in sorted(self.series.items())
            },
        })

    @classmethod
    def from_json(cls, text: str) -> "BootstrapModel":
        d = json.loads(text)
        if d.get("version") != MODEL_FORMAT_VERSION or d.get("kind") != "bootstrap":
            raise ValueError("unsupported forecaster file")
        series = {
            k: PriceSeries(k, parse_timestamp(v["start"]), timedelta(seconds=v["resolution_s"]),
                           np.array(v["prices_micro"], dtype=np.int64))
            for k, v in d["series"].items()
        }
        model = fit_bootstrap(series, d["block_len"], d["jitter"])
        if model.fingerprint != d["fingerprint"]:
            raise ValueError("forecaster fingerprint does not match its series")
        return model


def fit_bootstrap(train: Mapping[str, PriceSeries], block_len: int = 16, jitter: float = 0.0) -> BootstrapModel:
    if not train:
        raise SeriesTooShort("no training series")
    if block_len < 1:
        raise SeriesTooShort(f"block_len must be >= 1, got {block_len}")
    if jitter < 0:
        raise ValueError("jitter must be >= 0")
    for key, s in train.items():
        if len(s) < block_len:
            raise SeriesTooShort(f"{key}: {len(s)} points < block_len {block_len}")
    series = dict(train)
    return BootstrapModel(series, block_len, float(jitter), True, series_fingerprint(series))


def sample_area(model: ForecastModel, cfg: SyntheticAreaConfig, seed: int, area_id: str = "S0") -> CostArea:
    return model.sample_area(cfg, seed, area_id)


def forecast_next(model: ForecastModel, history: Sequence[float], horizon: int, mno_key: str | None = None):
    return model.forecast_next(history, horizon, mno_key)


def sample_areas(model: ForecastModel, cfg: SyntheticAreaConfig, count: int, seed: int) -> list[CostArea]:
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)
    return [model.sample_area(cfg, int(s), f"S{i}") for i, s in enumerate(seeds)]
