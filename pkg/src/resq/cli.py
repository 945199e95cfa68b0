"""Command-line entry point: ingest, areas, fit, synth, train, eval, report."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from datetime import timedelta
from pathlib import Path

from .agent import Agent, AgentConfig, Variant
from .coverage import SlotTemplate, build_areas, dump_areas, load_areas, load_route, trace_areas
from .env import EncoderDims, RewardParams
from .errors import ResqError
from .evaluation import GreedyPolicy, NoPolicy, OraclePolicy, evaluate_policy
from .forecaster import BootstrapModel, SyntheticAreaConfig, fit_bootstrap, sample_areas
from .pricedata import (
    PriceSeries, load_series_by_mno, parse_spot_csv, parse_timestamp, split_series,
)
from .trainer import PhaseConfig, checkpoint_load, checkpoint_save, run_phase1, run_phase2, run_phase3

log = logging.getLogger("resq")

METRICS = "metrics.json"
METRICS_CSV = "metrics.csv"
TRAIN_REPORT = "train_report.csv"
TRAIN_SUMMARY = "train_summary.json"
CHECKPOINT = "checkpoint.json"
FORECASTER = "forecaster.json"
AREAS = "areas.json"
REPORT = "report.csv"
CURVES = "training_curves.csv"
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


@dataclass
class RunConfig:
    # agent
    variant: str = "dueling"
    gamma: float = 0.85
    epsilon: float = 0.05
    lr: float = 1e-3
    hidden: int = 128
    batch_size: int = 64
    target_sync_period: int = 500
    buffer_capacity: int = 50_000
    # reward
    h: float = 0.01
    r_global_min: float = 1.0
    r_timeout: float = 2.0
    t_sv_minutes: float = 1.0
    # encoder
    dims: list = field(default_factory=lambda: [32, 3, 32])
    # phases
    episodes: int = 1000
    fine_tune_interval: int = 512
    fine_tune_updates: int = 32
    # synthetic areas and forecaster
    sessions_range: list = field(default_factory=lambda: [8, 32])
    slots_range: list = field(default_factory=lambda: [8, 32])
    operators: int = 3
    block_len: int = 16
    jitter: float = 0.0
    area_count: int = 200
    seed: int = 0
    # data paths (relative paths resolve against the config file's folder)
    spot_csv: str | None = None
    split_boundary: str | None = None
    series_dir: str | None = None
    route: str | None = None
    areas: str | None = None
    forecaster: str | None = None
    checkpoint: str | None = None
    out: str = "out"

    def agent_config(self) -> AgentConfig:
        return AgentConfig(self.gamma, self.epsilon, self.batch_size, self.target_sync_period,
                           Variant(self.variant), self.lr, self.hidden, self.buffer_capacity)

    def reward_params(self) -> RewardParams:
        return RewardParams(self.h, self.r_global_min, self.r_timeout, self.t_sv_minutes)

    def encoder_dims(self) -> EncoderDims:
        return EncoderDims(*self.dims)

    def phase_config(self) -> PhaseConfig:
        return PhaseConfig(self.episodes, self.fine_tune_interval, self.fine_tune_updates, self.seed)

    def synth_config(self) -> SyntheticAreaConfig:
        return SyntheticAreaConfig(tuple(self.sessions_range), tuple(self.slots_range), self.operators,
                                   seed=self.seed)

    def validate(self) -> None:
        # every component re-checks its own invariants
        self.agent_config()
        self.reward_params()
        self.phase_config()
        self.synth_config()
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")


PATH_FIELDS = ("spot_csv", "series_dir", "route", "areas", "forecaster", "checkpoint")


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    base = Path(path).resolve().parent
    raw = json.loads(Path(path).read_text())
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    cfg = RunConfig(**raw)
    for name in PATH_FIELDS + ("out",):
        value = getattr(cfg, name)
        if value is not None and not Path(value).is_absolute():
            setattr(cfg, name, str(base / value))
    return cfg


def _need(cfg: RunConfig, name: str) -> Path:
    value = getattr(cfg, name)
    if value is None:
        raise ValueError(f"config field '{name}' is required for this command")
    p = Path(value)
    if not p.exists():
        raise FileNotFoundError(f"{name}: {p} does not exist")
    return p


# -- series folders ----------------------------------------------------------

def write_series_dir(series: dict[str, PriceSeries], folder: Path) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    index = {}
    for key, s in sorted(series.items()):
        name = f"{key}.csv"
        (folder / name).write_text(s.to_csv())
        index[key] = {"file": name, "resolution_s": int(s.resolution.total_seconds())}
    (folder / "index.json").write_text(json.dumps(index, indent=2))


def read_series_dir(folder: Path) -> dict[str, PriceSeries]:
    index = json.loads((folder / "index.json").read_text())
    return {
        key: PriceSeries.from_csv((folder / v["file"]).read_text(), key, timedelta(seconds=v["resolution_s"]))
        for key, v in index.items()
    }


# -- subcommands -------------------------------------------------------------

def cmd_ingest(cfg: RunConfig, args) -> None:
    out = Path(cfg.out)
    records = parse_spot_csv(_need(cfg, "spot_csv").read_text())
    series = load_series_by_mno(records)
    write_series_dir(series, out / "series" / "all")
    if cfg.split_boundary:
        boundary = parse_timestamp(cfg.split_boundary)
        splits = {k: split_series(s, boundary) for k, s in series.items()}
        write_series_dir({k: sp.train for k, sp in splits.items()}, out / "series" / "train")
        write_series_dir({k: sp.test for k, sp in splits.items()}, out / "series" / "test")
    log.info("ingested %d records into %d series", len(records), len(series))


def cmd_areas(cfg: RunConfig, args) -> None:
    series = read_series_dir(_need(cfg, "series_dir"))
    if cfg.route:
        route = load_route(_need(cfg, "route").read_text())
        slots = SlotTemplate.uniform(cfg.slots_range[1], max_sessions=cfg.dims[0])
        areas = list(build_areas(route, series, slots))
    else:
        areas = trace_areas(series, cfg.area_count, cfg.seed, tuple(cfg.sessions_range), tuple(cfg.slots_range))
    _write(Path(cfg.out) / AREAS, dump_areas(areas))


def cmd_fit(cfg: RunConfig, args) -> None:
    model = fit_bootstrap(read_series_dir(_need(cfg, "series_dir")), cfg.block_len, cfg.jitter)
    _write(Path(cfg.out) / FORECASTER, model.to_json())


def _load_forecaster(cfg: RunConfig) -> BootstrapModel:
    return BootstrapModel.from_json(_need(cfg, "forecaster").read_text())


def cmd_synth(cfg: RunConfig, args) -> None:
    areas = sample_areas(_load_forecaster(cfg), cfg.synth_config(), cfg.area_count, cfg.seed)
    _write(Path(cfg.out) / AREAS, dump_areas(areas))


def _agent_for_training(cfg: RunConfig) -> Agent:
    dims = cfg.encoder_dims()
    if cfg.checkpoint:
        agent = checkpoint_load(_need(cfg, "checkpoint"), dims)
        if agent.config.variant is not Variant(cfg.variant):
            raise ValueError(f"checkpoint variant {agent.config.variant.value} != {cfg.variant}")
        return agent
    return Agent(dims.input_dim, dims.n_actions, cfg.agent_config(), seed=cfg.seed)


def cmd_train(cfg: RunConfig, args) -> None:
    out = Path(cfg.out)
    dims, params, phase = cfg.encoder_dims(), cfg.reward_params(), cfg.phase_config()
    agent = _agent_for_training(cfg)
    if args.phase == 1:
        report = run_phase1(agent, _load_forecaster(cfg), phase, cfg.synth_config(), params, dims)
    elif args.phase == 2:
        report = run_phase2(agent, load_areas(_need(cfg, "areas").read_text()), phase, params, dims)
    else:
        report = run_phase3(agent, load_areas(_need(cfg, "areas").read_text()), phase, params, dims)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_save(agent, out / CHECKPOINT, dims)
    report.checkpoint_path = CHECKPOINT
    _write(out / TRAIN_REPORT, report.to_csv())
    summary = {k: v for k, v in report.summary().items() if k != "wall_clock_s"}
    _write(out / TRAIN_SUMMARY, json.dumps({"phase": args.phase, "variant": cfg.variant, **summary}, indent=2))


def cmd_eval(cfg: RunConfig, args) -> None:
    areas = load_areas(_need(cfg, "areas").read_text())
    params = cfg.reward_params()
    if args.policy == "none":
        policy = NoPolicy()
    elif args.policy == "oracle":
        policy = OraclePolicy(params)
    else:
        agent = checkpoint_load(_need(cfg, "checkpoint"), cfg.encoder_dims())
        if agent.config.variant is not Variant(args.policy):
            raise ValueError(f"checkpoint holds a {agent.config.variant.value} agent, not {args.policy}")
        policy = GreedyPolicy(agent.online, cfg.encoder_dims())
    metrics = evaluate_policy(policy, areas, params, workers=args.workers)
    out = Path(cfg.out)
    _write(out / METRICS, json.dumps({"policy": args.policy, **metrics.summary()}, indent=2))
    _write(out / METRICS_CSV, metrics.to_csv())


REPORT_COLUMNS = ("run", "policy", "episodes", "avg_reward", "total_cost", "baseline_cost", "total_penalty",
                  "savings_pct", "total_savings_pct", "mean_accept_session", "decision_reservation_spearman")


def cmd_report(cfg: RunConfig, args) -> None:
    rows, curves = [], []
    for d in map(Path, args.runs):
        if (d / METRICS).exists():
            m = json.loads((d / METRICS).read_text())
            rows.append([d.name] + [m.get(c) for c in REPORT_COLUMNS[1:]])
        if (d / TRAIN_REPORT).exists():
            reader = csv.DictReader(io.StringIO((d / TRAIN_REPORT).read_text()))
            rewards = []
            for rec in reader:
                rewards.append(float(rec["reward"]))
                window = rewards[-50:]
                curves.append([d.name, rec["episode"], rec["reward"], repr(sum(window) / len(window))])
    if not rows and not curves:
        raise ValueError("no metrics.json or train_report.csv found in the given run folders")
    out = Path(cfg.out)
    _write(out / REPORT, _csv([REPORT_COLUMNS] + rows))
    _write(out / CURVES, _csv([("run", "episode", "reward", "moving_avg_50")] + curves))


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(["" if v is None else v for v in r] for r in rows)
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


COMMANDS = {
    "ingest": cmd_ingest, "areas": cmd_areas, "fit": cmd_fit, "synth": cmd_synth,
    "train": cmd_train, "eval": cmd_eval, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output folder (overrides the config)")
    common.add_argument("--variant", choices=[v.value for v in Variant], help="agent variant")

    p = argparse.ArgumentParser(prog="resq", description="Area-wise deep Q-learning for bandwidth reservation.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="spot-price CSV to per-operator series")
    sub.add_parser("areas", parents=[common], help="route (or random windows) plus series to cost areas")
    sub.add_parser("fit", parents=[common], help="fit the block-bootstrap forecaster")
    sub.add_parser("synth", parents=[common], help="sample synthetic cost areas")
    t = sub.add_parser("train", parents=[common], help="run one training phase")
    t.add_argument("--phase", type=int, choices=(1, 2, 3), required=True)
    e = sub.add_parser("eval", parents=[common], help="evaluate a policy on an area set")
    e.add_argument("--policy", choices=("none", "dqn", "double", "dueling", "oracle"), required=True)
    e.add_argument("--workers", type=int, default=1)
    r = sub.add_parser("report", parents=[common], help="merge run folders into comparison tables")
    r.add_argument("runs", nargs="+", help="run output folders")
    return p


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = LOG_LEVELS.get(os.environ.get("RESQ_LOG", "info").lower(), logging.INFO)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        overrides = {k: v for k, v in (("seed", args.seed), ("out", args.out), ("variant", args.variant))
                     if v is not None}
        cfg = replace(cfg, **overrides)
        if args.command == "eval" and args.policy in ("dqn", "double", "dueling"):
            cfg = replace(cfg, variant=args.policy)
        if getattr(args, "workers", 1) < 1:
            parser.error("--workers must be >= 1")
        cfg.validate()
        COMMANDS[args.command](cfg, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ResqError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
