"""Write a synthetic regression dataset (CSV + metadata) and a matching experiment plan.

    python3 scripts/make_synthetic.py --out runs/synth --rows 5499 --grid parkinson
"""

import argparse
import json
from pathlib import Path

from dpbench import grids
from dpbench.data import dump_meta, synth_regression, with_categorical, write_csv
from dpbench.harness import ExperimentPlan, TaskSpec, query_tasks

SIZES = {"parkinson": grids.PARKINSON_SIZES, "health": grids.HEALTH_SURVEY_SIZES}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--rows", type=int, default=5499)
    ap.add_argument("--weights", type=float, nargs="+", default=[1.0, -2.0, 0.5, 3.0])
    ap.add_argument("--noise", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid", choices=sorted(SIZES), default="parkinson")
    args = ap.parse_args()

    d = synth_regression(args.rows, len(args.weights), args.weights, args.noise, seed=args.seed, bias=10.0)
    d = with_categorical(d, "grp", ["a", "b", "c", "d"], seed=args.seed + 1)
    sizes = tuple(s for s in SIZES[args.grid] if s <= args.rows)

    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(d, args.out / "data.csv")
    dump_meta(d, args.out / "meta.json")
    queries = ExperimentPlan(sizes=sizes, tasks=tuple(t for t in query_tasks(d) if t.column in ("y", "grp")))
    ml = ExperimentPlan(sizes=sizes, tasks=(TaskSpec("regression", "y"),), repetitions=grids.ML_REPETITIONS)
    (args.out / "queries.plan.json").write_text(json.dumps(queries.to_dict(), indent=2))
    (args.out / "ml.plan.json").write_text(json.dumps(ml.to_dict(), indent=2))
    print(f"wrote {d.size} rows and two plans to {args.out}")


if __name__ == "__main__":
    main()
