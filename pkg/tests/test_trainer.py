import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from resq.agent import Agent, AgentConfig, Transition, Variant
from resq.coverage import CostArea
from resq.env import EncoderDims, RewardParams
from resq.errors import EmptyAreaSource, ShapeMismatch, VersionMismatch
from resq.evaluation import GreedyPolicy, evaluate_policy
from resq.forecaster import SyntheticAreaConfig, fit_bootstrap, sample_areas
from resq.nn import forward
from resq.pricedata import PriceSeries
from resq.trainer import (
    PhaseConfig, TrainReport, checkpoint_load, checkpoint_save, run_episode, run_phase1, run_phase2, run_phase3,
)

T0 = datetime(2021, 4, 17, tzinfo=timezone.utc)
DIMS = EncoderDims(6, 3, 6)
SYNTH = SyntheticAreaConfig(sessions_range=(2, 6), slots_range=(2, 6))
PARAMS = RewardParams()


def small_agent(seed=0, variant=Variant.DUELING, **kw):
    cfg = AgentConfig(variant=variant, hidden=32, batch_size=16, **kw)
    return Agent(DIMS.input_dim, DIMS.n_actions, cfg, seed=seed)


@pytest.fixture(scope="module")
def model():
    rng = np.random.default_rng(0)
    train = {k: PriceSeries(k, T0, timedelta(minutes=1), rng.integers(1_000_000, 3_000_000, size=400))
             for k in ("a", "b", "c")}
    return fit_bootstrap(train, 8)


def two_session_area():
    p = np.array([[[500_000]], [[300_000]]], dtype=np.int64)
    return CostArea("A", T0, T0 + timedelta(minutes=2), ("op",), (timedelta(0),), p)


def test_single_episode_on_two_sessions():
    agent = small_agent()
    rep = run_phase2(agent, [two_session_area()], PhaseConfig(episodes=1), PARAMS, DIMS)
    assert rep.episodes == 1 and rep.steps[0] <= 3
    assert len(rep.rewards) == len(rep.losses) == 1


def test_phase1_deterministic(model):
    reps = [run_phase1(small_agent(3), model, PhaseConfig(episodes=30, seed=5), SYNTH, PARAMS, DIMS)
            for _ in range(2)]
    assert reps[0].rewards == reps[1].rewards
    assert reps[0].to_csv() == reps[1].to_csv()


def test_phase1_report_lengths(model):
    rep = run_phase1(small_agent(), model, PhaseConfig(episodes=12), SYNTH, PARAMS, DIMS)
    assert rep.episodes == 12 == len(rep.losses) == len(rep.steps)
    assert rep.transitions == sum(rep.steps)
    assert rep.moving_average(50).shape == (12,)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "episode,reward,loss" and len(lines) == 13


def test_phase2_empty_and_count(model):
    with pytest.raises(EmptyAreaSource):
        run_phase2(small_agent(), [], PhaseConfig(episodes=3))
    areas = sample_areas(model, SYNTH, 5, seed=1)
    rep = run_phase2(small_agent(), areas, PhaseConfig(episodes=7), PARAMS, DIMS)
    assert rep.episodes == 7


def _transitions(n, rng):
    mask = np.ones(DIMS.n_actions, bool)
    return [Transition(rng.random(DIMS.input_dim), int(rng.integers(DIMS.n_actions)), -1.0,
                       rng.random(DIMS.input_dim), bool(rng.random() < 0.3), mask) for _ in range(n)]


@pytest.mark.parametrize("n,rounds", [(0, 0), (63, 0), (64, 1), (128, 2), (200, 3)])
def test_phase3_round_count(n, rounds):
    agent = small_agent()
    rep = run_phase3(agent, _transitions(n, np.random.default_rng(0)),
                     PhaseConfig(fine_tune_interval=64, fine_tune_updates=4), PARAMS, DIMS)
    assert rep.fine_tune_rounds == rounds == n // 64
    assert agent.updates == 4 * rounds


def test_phase3_live_areas_count_transitions(model):
    areas = sample_areas(model, SYNTH, 20, seed=2)
    agent = small_agent()
    rep = run_phase3(agent, areas, PhaseConfig(fine_tune_interval=16, fine_tune_updates=2), PARAMS, DIMS)
    assert rep.episodes == 20
    assert rep.fine_tune_rounds == rep.transitions // 16


def test_phase3_improves_on_stationary_stream(model):
    """Before/after greedy evaluation on held-out areas, 3-seed majority."""
    held = sample_areas(model, SYNTH, 100, seed=99)
    wins = 0
    for seed in range(3):
        agent = small_agent(seed)
        before = evaluate_policy(GreedyPolicy(agent.online, DIMS), held, PARAMS).avg_reward
        stream = sample_areas(model, SYNTH, 600, seed=1000 + seed)
        run_phase3(agent, stream, PhaseConfig(fine_tune_interval=16, fine_tune_updates=16), PARAMS, DIMS)
        after = evaluate_policy(GreedyPolicy(agent.online, DIMS), held, PARAMS).avg_reward
        wins += after >= before
    assert wins >= 2


def test_checkpoint_round_trip(tmp_path, model):
    agent = small_agent()
    run_phase1(agent, model, PhaseConfig(episodes=15), SYNTH, PARAMS, DIMS)
    path = tmp_path / "checkpoint.json"
    checkpoint_save(agent, path, DIMS, include_buffer=True)
    back = checkpoint_load(path, DIMS)
    x = np.random.default_rng(0).random((100, DIMS.input_dim))
    assert np.array_equal(forward(back.online, x), forward(agent.online, x))
    assert np.array_equal(forward(back.target, x), forward(agent.target, x))
    assert back.updates == agent.updates and back.config == agent.config
    assert len(back.buffer) == len(agent.buffer)
    # training continues identically from the restored state
    area = sample_areas(model, SYNTH, 1, seed=7)[0]
    assert run_episode(agent, area, PARAMS, DIMS) == run_episode(back, area, PARAMS, DIMS)


def test_checkpoint_corrupted(tmp_path):
    agent = small_agent()
    path = tmp_path / "c.json"
    checkpoint_save(agent, path, DIMS)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(VersionMismatch):
        checkpoint_load(path)
    doc = json.loads(text)
    del doc["online"]
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionMismatch):
        checkpoint_load(path)


def test_checkpoint_dims_mismatch(tmp_path):
    path = tmp_path / "c.json"
    checkpoint_save(small_agent(), path, DIMS)
    with pytest.raises(ShapeMismatch):
        checkpoint_load(path, EncoderDims(5, 3, 6))


def test_report_csv_nan_loss():
    rep = TrainReport(rewards=[1.5, -0.25], losses=[float("nan"), 0.5], steps=[1, 2])
    assert rep.to_csv().splitlines()[1:] == ["0,1.5,", "1,-0.25,0.5"]
