"""Write a spot-price CSV fixture from the synthetic trace generator.

    python scripts/make_fixture.py tests/fixtures/spot_10k.csv --rows 10000
"""
import argparse
from pathlib import Path

from resq.pricedata import format_spot_csv
from resq.tracegen import simulate_spot_records


def main():
    p = argparse.ArgumentParser()
    p.add_argument("path")
    p.add_argument("--rows", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    minutes = args.rows  # three feeds emit well over one change per minute in total
    records = simulate_spot_records(minutes, seed=args.seed)
    if len(records) < args.rows:
        raise SystemExit(f"only {len(records)} records; raise minutes")
    Path(args.path).write_text(format_spot_csv(records[: args.rows]))


if __name__ == "__main__":
    main()
