"""Desk-scale run: Phase-1 training per variant and seed, held-out evaluation,
and Phase-2 fine-tuning for the dueling agent.

    python scripts/desk_experiment.py --out desk_out
    python scripts/desk_experiment.py --episodes 200 --seeds 0 --variants dueling   # quick look

Writes results.json (one entry per run) and curves.csv (episode rewards).
Runs are done one after another so only one replay buffer is alive at a time.
"""
import argparse
import csv
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from resq.agent import Variant
from resq.desk import DeskConfig, build_desk_data, reference_metrics, run_desk


def slope(y):
    return float(np.polyfit(np.arange(len(y)), y, 1)[0])


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="desk_out")
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--variants", nargs="+", default=["dueling", "dqn", "double"],
                   choices=[v.value for v in Variant])
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = replace(DeskConfig(), episodes=args.episodes)
    data = build_desk_data(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    results = {"reference": {}}
    for name, areas in (("held_synth", data.held_synth), ("real_test", data.real_test)):
        results["reference"][name] = {k: m.summary() for k, m in reference_metrics(areas).items()}
        print(f"{name}: oracle savings {results['reference'][name]['oracle']['savings_pct']:.2f}%")

    runs, curves = [], []
    for variant in args.variants:
        for seed in args.seeds:
            r = run_desk(data, Variant(variant), seed, cfg, with_phase2=variant == "dueling")
            rew = r.report.rewards
            row = {
                "variant": variant, "seed": seed, "train_seconds": round(r.report.wall_clock, 1),
                "synth_savings_pct": r.synth_metrics.savings_pct,
                "final_ma100": float(np.mean(rew[-100:])),
                "first_ma100": float(np.mean(rew[:100])),
                "slope_first200": slope(rew[:200]), "slope_last200": slope(rew[-200:]),
            }
            if r.phase2_real_metrics is not None:
                row["real_savings_phase1_pct"] = r.real_metrics.savings_pct
                row["real_savings_phase2_pct"] = r.phase2_real_metrics.savings_pct
            runs.append(row)
            curves += [(variant, seed, e, x) for e, x in enumerate(rew)]
            print(json.dumps(row))
    results["runs"] = runs

    (out / "results.json").write_text(json.dumps(results, indent=2))
    with open(out / "curves.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "seed", "episode", "reward"])
        w.writerows(curves)


if __name__ == "__main__":
    main()
