"""Multi-phase training: synthetic pre-training, real-trace fine-tuning, online refresh.

Every episode presents exactly one cost area. Parameters, optimizer state and
the replay buffer carry over between episodes and between phases.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agent import Agent, AgentConfig, ReplayBuffer, Transition, Variant, train_step
from .coverage import CostArea
from .env import EncoderDims, RewardParams, encode_state, index_action, legal_mask, reset, step
from .errors import EmptyAreaSource, ShapeMismatch, VersionMismatch
from .forecaster import ForecastModel, SyntheticAreaConfig
from .nn import net_from_dict, net_to_dict

log = logging.getLogger(__name__)

AGENT_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PhaseConfig:
    episodes: int = 1000
    fine_tune_interval: int = 512
    fine_tune_updates: int = 32
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.episodes < 1 or self.fine_tune_interval < 1 or self.fine_tune_updates < 0:
            raise ValueError("episodes and fine_tune_interval must be >= 1")


@dataclass
class TrainReport:
    rewards: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    wall_clock: float = 0.0
    fine_tune_rounds: int = 0
    transitions: int = 0
    checkpoint_path: str | None = None

    @property
    def episodes(self) -> int:
        return len(self.rewards)

    def moving_average(self, window: int = 50) -> np.ndarray:
        r = np.asarray(self.rewards, dtype=float)
        if r.size == 0:
            return r
        c = np.cumsum(np.insert(r, 0, 0.0))
        idx = np.arange(1, r.size + 1)
        lo = np.maximum(idx - window, 0)
        return (c[idx] - c[lo]) / (idx - lo)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["episode", "reward", "loss"])
        for i, (r, l) in enumerate(zip(self.rewards, self.losses)):
            w.writerow([i, repr(float(r)), "" if np.isnan(l) else repr(float(l))])
        return out.getvalue()

    def summary(self) -> dict:
        ma = self.moving_average(50)
        return {
            "episodes": self.episodes,
            "transitions": self.transitions,
            "fine_tune_rounds": self.fine_tune_rounds,
            "mean_reward": float(np.mean(self.rewards)) if self.rewards else None,
            "final_moving_average_50": float(ma[-1]) if ma.size else None,
            "wall_clock_s": self.wall_clock,
            "checkpoint_path": self.checkpoint_path,
        }


def run_episode(agent: Agent, area: CostArea, params: RewardParams, dims: EncoderDims,
                learn: bool = True) -> tuple[float, list[float], int]:
    """Play one area with epsilon-greedy actions, storing every transition."""
    state = reset(area, params)
    s = encode_state(state, dims).astype(np.float32)
    mask = legal_mask(state, dims)
    total, losses, n = 0.0, [], 0
    while not state.done:
        a = agent.act(s, mask)
        out = step(state, index_action(a, dims))
        s2 = encode_state(out.next_state, dims).astype(np.float32)
        mask2 = legal_mask(out.next_state, dims)
        agent.remember(Transition(s, a, out.reward, s2, out.done, mask2))
        total += out.reward
        n += 1
        if learn:
            loss = agent.learn()
            if loss is not None:
                losses.append(loss)
        state, s, mask = out.next_state, s2, mask2
    return total, losses, n


def _train_loop(agent: Agent, next_area, episodes: int, params: RewardParams, dims: EncoderDims,
                cfg: PhaseConfig, phase: str) -> TrainReport:
    report = TrainReport()
    t0 = time.perf_counter()
    for e in range(episodes):
        area = next_area(e)
        reward, losses, n = run_episode(agent, area, params, dims)
        report.rewards.append(reward)
        report.losses.append(float(np.mean(losses)) if losses else float("nan"))
        report.steps.append(n)
        report.transitions += n
        if cfg.checkpoint_every and cfg.checkpoint_path and (e + 1) % cfg.checkpoint_every == 0:
            checkpoint_save(agent, cfg.checkpoint_path, dims)
            report.checkpoint_path = cfg.checkpoint_path
        if (e + 1) % 100 == 0:
            log.info("%s episode %d: moving avg reward %.4f", phase, e + 1, report.moving_average(50)[-1])
    report.wall_clock = time.perf_counter() - t0
    if cfg.checkpoint_path:
        checkpoint_save(agent, cfg.checkpoint_path, dims)
        report.checkpoint_path = cfg.checkpoint_path
    return report


def run_phase1(agent: Agent, forecaster: ForecastModel, cfg: PhaseConfig,
               synth: SyntheticAreaConfig = SyntheticAreaConfig(),
               params: RewardParams = RewardParams(), dims: EncoderDims = EncoderDims()) -> TrainReport:
    """Pre-train on one freshly generated synthetic area per episode."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.episodes, dtype=np.uint32)
    return _train_loop(agent, lambda e: forecaster.sample_area(synth, int(seeds[e]), f"S{e}"),
                       cfg.episodes, params, dims, cfg, "phase1")


def run_phase2(agent: Agent, real_areas: Sequence[CostArea], cfg: PhaseConfig,
               params: RewardParams = RewardParams(), dims: EncoderDims = EncoderDims()) -> TrainReport:
    """Fine-tune on areas cut from the real training span, drawn uniformly with replacement."""
    if not real_areas:
        raise EmptyAreaSource("phase 2 needs at least one real area")
    rng = np.random.default_rng(cfg.seed)
    picks = rng.integers(0, len(real_areas), size=cfg.episodes)
    return _train_loop(agent, lambda e: real_areas[int(picks[e])], cfg.episodes, params, dims, cfg, "phase2")


def fine_tune_round(agent: Agent, updates: int) -> list[float]:
    losses = []
    if len(agent.buffer) < agent.config.batch_size:
        return losses
    for _ in range(updates):
        losses.append(train_step(agent, agent.buffer.sample(agent.config.batch_size, agent.rng)))
    return losses


def run_phase3(agent: Agent, stream: Iterable[CostArea | Transition], cfg: PhaseConfig,
               params: RewardParams = RewardParams(), dims: EncoderDims = EncoderDims()) -> TrainReport:
    """Online operation with periodic fine-tuning.

    Items of ``stream`` are live areas (played epsilon-greedily without
    per-step learning) or ready-made transitions. Each time
    ``fine_tune_interval`` new transitions have been stored, a round of
    ``fine_tune_updates`` mini-batch updates runs and the timer resets.
    """
    report = TrainReport()
    t0 = time.perf_counter()
    timer = 0
    round_losses: list[float] = []

    def observe(t: Transition):
        nonlocal timer, round_losses
        agent.remember(t)
        report.transitions += 1
        timer += 1
        if timer >= cfg.fine_tune_interval:
            round_losses += fine_tune_round(agent, cfg.fine_tune_updates)
            report.fine_tune_rounds += 1
            timer = 0

    for item in stream:
        if isinstance(item, Transition):
            observe(item)
            continue
        state = reset(item, params)
        s = encode_state(state, dims).astype(np.float32)
        mask = legal_mask(state, dims)
        total, n = 0.0, 0
        round_losses = []
        while not state.done:
            a = agent.act(s, mask)
            out = step(state, index_action(a, dims))
            s2 = encode_state(out.next_state, dims).astype(np.float32)
            mask2 = legal_mask(out.next_state, dims)
            observe(Transition(s, a, out.reward, s2, out.done, mask2))
            total += out.reward
            n += 1
            state, s, mask = out.next_state, s2, mask2
        report.rewards.append(total)
        report.losses.append(float(np.mean(round_losses)) if round_losses else float("nan"))
        report.steps.append(n)
    report.wall_clock = time.perf_counter() - t0
    if cfg.checkpoint_path:
        checkpoint_save(agent, cfg.checkpoint_path, dims)
        report.checkpoint_path = cfg.checkpoint_path
    return report


# -- checkpoints -------------------------------------------------------------

def _config_dict(cfg: AgentConfig) -> dict:
    d = asdict(cfg)
    d["variant"] = cfg.variant.value
    return d


def checkpoint_save(agent: Agent, path, dims: EncoderDims = EncoderDims(), include_buffer: bool = False) -> None:
    """Write networks, optimizer, config, RNG state and buffer statistics as JSON.

    With ``include_buffer`` the stored transitions go to ``<path>.buffer.npz``.
    """
    path = Path(path)
    doc = {
        "version": AGENT_CHECKPOINT_VERSION,
        "encoder_dims": list(dims.as_tuple()),
        "config": _config_dict(agent.config),
        "updates": agent.updates,
        "rng_state": agent.rng.bit_generator.state,
        "buffer": {"size": len(agent.buffer), "pushed": agent.buffer.pushed,
                   "capacity": agent.buffer.capacity, "file": None},
        "online": net_to_dict(agent.online, agent.opt),
        "target": net_to_dict(agent.target),
    }
    if include_buffer and len(agent.buffer):
        items = agent.buffer.contents()
        bpath = path.with_name(path.name + ".buffer.npz")
        np.savez_compressed(
            bpath,
            s=np.stack([t.s for t in items]), a=np.array([t.a for t in items]),
            r=np.array([t.r for t in items]), s2=np.stack([t.s2 for t in items]),
            done=np.array([t.done for t in items]), mask2=np.stack([t.mask2 for t in items]),
        )
        doc["buffer"]["file"] = bpath.name
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc))
    tmp.replace(path)


def checkpoint_load(path, dims: EncoderDims | None = None) -> Agent:
    """Rebuild an agent; ``dims`` (if given) must match the stored encoder dims."""
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise VersionMismatch(f"{path}: not a checkpoint ({exc})") from None
    if not isinstance(doc, dict) or doc.get("version") != AGENT_CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: unsupported checkpoint version")
    try:
        stored = EncoderDims(*doc["encoder_dims"])
        if dims is not None and stored != dims:
            raise ShapeMismatch(f"checkpoint encoder dims {stored.as_tuple()} != {dims.as_tuple()}")
        cfg_d = dict(doc["config"])
        cfg = AgentConfig(**{**cfg_d, "variant": Variant(cfg_d["variant"])})
        expect = (stored.input_dim, cfg.hidden, stored.n_actions)
        online, opt = net_from_dict(doc["online"], expect)
        target, _ = net_from_dict(doc["target"], expect)
        if online.head_mode is not cfg.variant.head_mode:
            raise ShapeMismatch("head mode does not match the configured variant")
        agent = Agent.__new__(Agent)
        agent.config = cfg
        agent.rng = np.random.default_rng()
        agent.rng.bit_generator.state = doc["rng_state"]
        agent.online, agent.target = online, target
        agent.opt = opt
        agent.updates = int(doc["updates"])
        agent.buffer = ReplayBuffer(cfg.buffer_capacity)
        bfile = doc["buffer"].get("file")
        if bfile:
            with np.load(path.with_name(bfile)) as z:
                for i in range(z["a"].size):
                    agent.buffer.push(Transition(z["s"][i], int(z["a"][i]), float(z["r"][i]), z["s2"][i],
                                                 bool(z["done"][i]), z["mask2"][i]))
            agent.buffer.pushed = int(doc["buffer"]["pushed"])
    except (KeyError, TypeError) as exc:
        raise VersionMismatch(f"{path}: malformed checkpoint ({exc})") from None
    return agent
