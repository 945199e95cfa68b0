"""Desk-scale experiment setup shared by the scripts and the acceptance suite.

A simulated three-feed spot market stands in for the recorded traces. The
span is cut into a training period and a later test period, the bootstrap
forecaster is fitted on the training period, and held-out area sets are
drawn from the forecaster and from both periods.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .agent import Agent, AgentConfig, Variant
from .coverage import CostArea, trace_areas
from .env import EncoderDims, RewardParams
from .evaluation import GreedyPolicy, Metrics, NoPolicy, OraclePolicy, evaluate_policy
from .forecaster import BootstrapModel, SyntheticAreaConfig, fit_bootstrap, sample_areas
from .pricedata import PriceSeries, load_series_by_mno, split_series
from .tracegen import DEFAULT_START, TraceParams, simulate_spot_records
from .trainer import PhaseConfig, TrainReport, run_phase1, run_phase2

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeskConfig:
    trace_seed: int = 0
    trace_days: int = 22
    boundary: datetime = datetime(2021, 5, 3, tzinfo=timezone.utc)
    trace: TraceParams = field(default_factory=TraceParams)
    block_len: int = 16
    held_out: int = 200
    held_out_seed: int = 12345
    real_train_areas: int = 500
    real_seed: int = 777
    episodes: int = 1000


@dataclass
class DeskData:
    train: dict[str, PriceSeries]
    test: dict[str, PriceSeries]
    model: BootstrapModel
    held_synth: list[CostArea]
    real_train: list[CostArea]
    real_test: list[CostArea]


def build_desk_data(cfg: DeskConfig = DeskConfig()) -> DeskData:
    records = simulate_spot_records(cfg.trace_days * 1440, cfg.trace_seed, start=DEFAULT_START, params=cfg.trace)
    series = load_series_by_mno(records)
    splits = {k: split_series(s, cfg.boundary) for k, s in series.items()}
    train = {k: sp.train for k, sp in splits.items()}
    test = {k: sp.test for k, sp in splits.items()}
    model = fit_bootstrap(train, cfg.block_len)
    return DeskData(
        train, test, model,
        held_synth=sample_areas(model, SyntheticAreaConfig(), cfg.held_out, cfg.held_out_seed),
        real_train=trace_areas(train, cfg.real_train_areas, cfg.real_seed),
        real_test=trace_areas(test, cfg.held_out, cfg.real_seed + 1),
    )


@dataclass
class RunResult:
    variant: Variant
    seed: int
    report: TrainReport
    synth_metrics: Metrics
    real_metrics: Metrics | None = None
    phase2_report: TrainReport | None = None
    phase2_real_metrics: Metrics | None = None


def new_agent(variant: Variant, seed: int, dims: EncoderDims = EncoderDims()) -> Agent:
    return Agent(dims.input_dim, dims.n_actions, AgentConfig(variant=variant), seed=seed)


def run_desk(data: DeskData, variant: Variant, seed: int, cfg: DeskConfig = DeskConfig(),
             with_phase2: bool = False, params: RewardParams = RewardParams(),
             dims: EncoderDims = EncoderDims()) -> RunResult:
    """Phase 1 on synthetic areas, then optionally Phase 2 on real training-span areas.

    Savings on held-out real test areas are measured before and after Phase 2.
    """
    agent = new_agent(variant, seed, dims)
    report = run_phase1(agent, data.model, PhaseConfig(episodes=cfg.episodes, seed=seed),
                        SyntheticAreaConfig(), params, dims)
    res = RunResult(variant, seed, report, evaluate_policy(GreedyPolicy(agent.online, dims), data.held_synth, params))
    log.info("%s seed %d phase 1: %.1fs, savings %.2f%%", variant.value, seed, report.wall_clock,
             res.synth_metrics.savings_pct)
    if with_phase2:
        res.real_metrics = evaluate_policy(GreedyPolicy(agent.online, dims), data.real_test, params)
        res.phase2_report = run_phase2(agent, data.real_train, PhaseConfig(episodes=cfg.episodes, seed=seed),
                                       params, dims)
        res.phase2_real_metrics = evaluate_policy(GreedyPolicy(agent.online, dims), data.real_test, params)
    return res


def reference_metrics(areas: list[CostArea], params: RewardParams = RewardParams()) -> dict[str, Metrics]:
    return {"none": evaluate_policy(NoPolicy(), areas, params),
            "oracle": evaluate_policy(OraclePolicy(params), areas, params)}
