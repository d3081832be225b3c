"""Run a plan end to end: records, per-cell summaries and one CSV per metric.

    python3 scripts/run_sweep.py --dir runs/synth --plan queries.plan.json
"""

import argparse
import time
from pathlib import Path

from dpbench.data import load_csv, load_meta
from dpbench.harness import execute_plan, load_plan, persist_records
from dpbench.report import METRICS, aggregate, emit_plot_data, persist_summaries


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dir", type=Path, required=True, help="directory holding data.csv and meta.json")
    ap.add_argument("--plan", required=True, help="plan file name inside --dir")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    plan = load_plan(args.dir / args.plan)
    if args.seed is not None:
        plan = plan.with_seed(args.seed)
    metas, target = load_meta(args.dir / "meta.json")
    d = load_csv(args.dir / "data.csv", metas, target)

    stem = args.plan.removesuffix(".plan.json")
    total = len(plan.tasks) * len(plan.epsilons) * len(plan.sizes) * plan.repetitions
    done = 0
    t0 = time.perf_counter()

    def progress(_):
        nonlocal done
        done += 1
        if done % 500 == 0 or done == total:
            print(f"{done}/{total} runs ({time.perf_counter() - t0:.0f}s)", flush=True)

    records = execute_plan(plan, d, progress)
    persist_records(records, args.dir / f"{stem}.records.jsonl")
    summaries = aggregate(records, plan.trim)
    persist_summaries(summaries, args.dir / f"{stem}.summary.jsonl")
    for metric in METRICS:
        emit_plot_data(summaries, metric, "grid", args.dir / f"{stem}.{metric}.csv")
    print(f"{len(records)} records, {len(summaries)} cells -> {args.dir}")


if __name__ == "__main__":
    main()
