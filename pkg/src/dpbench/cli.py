"""Command-line entry point: run, aggregate, report, calibrate."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .data import load_csv, load_meta
from .dpml import calibrate_sigma
from .harness import execute_plan, load_plan, load_records, persist_records
from .mechanisms import PrivacyParams
from .report import METRICS, SHAPES, aggregate, emit_plot_data, load_summaries, persist_summaries


def _cmd_run(args: argparse.Namespace) -> None:
    plan = load_plan(args.plan)
    if args.seed is not None:
        plan = plan.with_seed(args.seed)
    metas, target = load_meta(args.meta)
    d = load_csv(args.data, metas, target)
    records = execute_plan(plan, d)
    persist_records(records, args.out)
    n_ok = sum(r.status == "ok" for r in records)
    print(f"{len(records)} records ({n_ok} ok) -> {args.out}")


def _cmd_aggregate(args: argparse.Namespace) -> None:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        summaries = aggregate(load_records(args.inp), trim=args.trim)
    for w in caught:
        logging.warning("%s", w.message)
    persist_summaries(summaries, args.out)
    print(f"{len(summaries)} cells -> {args.out}")


def _cmd_report(args: argparse.Namespace) -> None:
    rows = emit_plot_data(load_summaries(args.inp), args.metric, args.shape, args.out)
    print(f"{rows} rows -> {args.out}")


def _cmd_calibrate(args: argparse.Namespace) -> None:
    print(repr(calibrate_sigma(PrivacyParams(args.epsilon, args.delta), args.q, args.steps)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute an experiment plan and write run records")
    p.add_argument("--plan", required=True)
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--meta", required=True, help="column metadata (JSON)")
    p.add_argument("--out", required=True, help="records file (JSON lines)")
    p.add_argument("--seed", type=int, default=None, help="override the plan's master seed")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("aggregate", help="summarize run records per (task, epsilon, size)")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trim", type=int, default=1, help="extremes dropped per tail")
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("report", help="write plot-ready CSV for one metric")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--metric", required=True, choices=sorted(METRICS))
    p.add_argument("--shape", default="grid", choices=SHAPES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("calibrate", help="print the DP-SGD noise multiplier for a target budget")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--q", type=float, required=True, help="Poisson sampling rate")
    p.add_argument("--steps", type=int, required=True)
    p.set_defaults(func=_cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # one-line diagnostic, no traceback
        print(f"dpbench {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
