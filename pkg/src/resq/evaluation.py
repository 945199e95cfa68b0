"""Baselines, the exhaustive stopping oracle and evaluation metrics."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Sequence

import numpy as np
from scipy.stats import spearmanr

from .agent import select_action
from .coverage import CostArea
from .env import (
    WAIT, Accept, Action, EncoderDims, EnvState, RewardParams, encode_state, index_action, legal_mask, reset,
    step, wait_penalty,
)
from .errors import EmptyAreaSet, ZeroBaseline
from .nn import DuelingNet
from .pricedata import MICRO, micro_to_money

Policy = Callable[[EnvState], Action]


def no_policy_cost(area: CostArea, rng=None) -> Decimal:
    """Cheapest quote of the first real session (``rng`` is unused)."""
    return micro_to_money(area.prices_micro[0].min())


def _row_argmin(area: CostArea, row: int) -> Accept:
    m, r = np.unravel_index(int(np.argmin(area.prices_micro[row])), area.prices_micro[row].shape)
    return Accept(int(m), int(r))


def cost_savings(policy_cost, baseline_cost) -> float:
    """Percent saved against the baseline."""
    policy_cost, baseline_cost = float(policy_cost), float(baseline_cost)
    if baseline_cost <= 0:
        raise ZeroBaseline("baseline cost must be positive")
    return 100.0 * (baseline_cost - policy_cost) / baseline_cost


@dataclass(frozen=True)
class OracleResult:
    reward: float
    actions: tuple[Action, ...]
    accept: tuple[int, int, int] | None
    price: Decimal | None


def dp_oracle(area: CostArea, params: RewardParams = RewardParams(), wait_at_end: bool = False) -> OracleResult:
    """Best episode on a known trace, by enumerating every stopping session and quote.

    Rewards are accumulated in the same order the environment pays them, so
    replaying ``actions`` reproduces ``reward`` bit for bit. Ties keep the
    earliest session and then the lowest (m, r).
    """
    N, M, R = area.shape
    gmin = area.global_min_micro
    best = None
    paid = 0.0 + wait_penalty(0, params)
    for k in range(1, N + 1):
        row = area.prices_micro[k - 1]
        gains = np.where(row == gmin, params.r_global_min, (gmin - row) / MICRO)
        m, r = np.unravel_index(int(np.argmax(gains)), row.shape)
        total = paid + float(gains[m, r])
        if best is None or total > best[0]:
            best = (total, k, int(m), int(r))
        paid += wait_penalty(k, params)
    total, k, m, r = best
    actions: tuple[Action, ...] = (WAIT,) * k + (Accept(m, r),)
    result = OracleResult(total, actions, (k - 1, m, r), area.price(k - 1, m, r))
    if wait_at_end:
        timeout = paid - params.r_timeout
        if timeout > total:
            result = OracleResult(timeout, (WAIT,) * (N + 1), None, None)
    return result


# -- policies ----------------------------------------------------------------

class NoPolicy:
    """Wait out the empty start session, then take the cheapest first quote."""

    def __call__(self, state: EnvState) -> Action:
        if state.k == 0:
            return WAIT
        return _row_argmin(state.area, state.k - 1)


class GreedyPolicy:
    def __init__(self, net: DuelingNet, dims: EncoderDims = EncoderDims()):
        self.net, self.dims = net, dims
        self._rng = np.random.default_rng(0)

    def __call__(self, state: EnvState) -> Action:
        i = select_action(self.net, encode_state(state, self.dims), legal_mask(state, self.dims), 0.0, self._rng)
        return index_action(i, self.dims)


class OraclePolicy:
    def __init__(self, params: RewardParams = RewardParams()):
        self.params = params

    def __call__(self, state: EnvState) -> Action:
        plan = dp_oracle(state.area, self.params, state.wait_at_end).actions
        return plan[state.k] if state.k < len(plan) else plan[-1]


# -- metrics -----------------------------------------------------------------

@dataclass
class EpisodeResult:
    area_id: str
    reward: float
    penalty: float
    cost: Decimal
    baseline: Decimal
    accept: tuple[int, int, int] | None
    decision_minutes: float
    departure_minutes: float | None
    steps: int


@dataclass
class Metrics:
    episodes: list[EpisodeResult] = field(default_factory=list)

    @property
    def avg_reward(self) -> float:
        return float(np.mean([e.reward for e in self.episodes]))

    @property
    def total_cost(self) -> Decimal:
        return sum((e.cost for e in self.episodes), Decimal(0))

    @property
    def baseline_cost(self) -> Decimal:
        return sum((e.baseline for e in self.episodes), Decimal(0))

    @property
    def total_penalty(self) -> float:
        return float(sum(e.penalty for e in self.episodes))

    @property
    def savings_pct(self) -> float:
        """Mean of per-area savings; areas with a zero baseline are skipped."""
        vals = [cost_savings(e.cost, e.baseline) for e in self.episodes if e.baseline > 0]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def total_savings_pct(self) -> float:
        return cost_savings(self.total_cost, self.baseline_cost)

    def cumulative(self) -> dict[str, np.ndarray]:
        return {
            "cum_reward": np.cumsum([e.reward for e in self.episodes]),
            "cum_cost": np.cumsum([float(e.cost) for e in self.episodes]),
            "cum_penalty": np.cumsum([e.penalty for e in self.episodes]),
        }

    @property
    def decisions(self) -> list[tuple[float, float]]:
        return [(e.decision_minutes, e.departure_minutes) for e in self.episodes
                if e.departure_minutes is not None]

    def rank_correlation(self) -> float:
        pairs = self.decisions
        if len(pairs) < 2:
            return float("nan")
        d, r = zip(*pairs)
        if len(set(d)) < 2 or len(set(r)) < 2:
            return float("nan")
        return float(spearmanr(d, r).statistic)

    def choices(self) -> dict[str, tuple[int, int, int]]:
        return {e.area_id: e.accept for e in self.episodes if e.accept is not None}

    def summary(self) -> dict:
        return {
            "episodes": len(self.episodes),
            "avg_reward": self.avg_reward,
            "total_cost": f"{self.total_cost:f}",
            "baseline_cost": f"{self.baseline_cost:f}",
            "total_penalty": self.total_penalty,
            "savings_pct": self.savings_pct,
            "total_savings_pct": self.total_savings_pct if self.baseline_cost > 0 else None,
            "mean_accept_session": float(np.mean([e.accept[0] for e in self.episodes if e.accept])) if self.choices() else None,
            "decision_reservation_spearman": _json_float(self.rank_correlation()),
            "decisions": self.decisions,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["episode", "cum_reward", "cum_cost", "cum_penalty"])
        c = self.cumulative()
        for i in range(len(self.episodes)):
            w.writerow([i, repr(float(c["cum_reward"][i])), repr(float(c["cum_cost"][i])),
                        repr(float(c["cum_penalty"][i]))])
        return out.getvalue()


def _json_float(x: float):
    return None if np.isnan(x) else x


def run_policy_episode(policy: Policy, area: CostArea, params: RewardParams = RewardParams()) -> EpisodeResult:
    state = reset(area, params)
    reward = penalty = 0.0
    accept = None
    steps = 0
    while not state.done:
        action = policy(state)
        out = step(state, action)
        reward += out.reward
        if isinstance(action, Accept):
            accept = (state.k - 1, action.m, action.r)
        elif state.k >= 1:
            penalty += out.reward
        steps += 1
        state = out.next_state
    baseline = no_policy_cost(area)
    if accept is None:
        cost, departure = baseline, None
    else:
        cost = area.price(*accept)
        departure = area.slot_offsets[accept[2]].total_seconds() / 60.0
    return EpisodeResult(area.area_id, reward, penalty, cost, baseline, accept,
                         state.k * params.t_sv_minutes, departure, steps)


def evaluate_policy(policy: Policy, areas: Sequence[CostArea], params: RewardParams = RewardParams(),
                    workers: int = 1) -> Metrics:
    """Run every area once under ``policy`` and collect per-episode results."""
    if not areas:
        raise EmptyAreaSet("no areas to evaluate")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda a: run_policy_episode(policy, a, params), areas))
    else:
        results = [run_policy_episode(policy, a, params) for a in areas]
    return Metrics(results)
