"""Aggregate run records into per-cell summaries and write plot-ready tables."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

from . import grids
from .harness import SCHEMA_VERSION, RunRecord
from .metrics import PairedSample, nonzero_pairs, overhead_percent, rmspe, trim_extremes

log = logging.getLogger(__name__)

METRICS = {"utility": "utility_rmspe", "runtime": "runtime_rmspe", "memory": "memory_delta"}
SHAPES = ("grid", "lines")
UNUSABLE = "unusable"


class SchemaError(ValueError):
    pass


@dataclass
class MetricSummary:
    task_id: str
    epsilon: float
    size: int
    utility_rmspe: float | None
    runtime_rmspe: float | None
    memory_delta: float | None
    n_ok: int
    n_failed: int
    n_skipped: int = 0
    n_used: int = 0
    usable: bool = True
    runtime_mean_delta_ns: float | None = None
    schema_version: int = SCHEMA_VERSION


def utility_error(r: RunRecord) -> float:
    """Signed DP-minus-NP error of one run; summed over bins for histograms."""
    if isinstance(r.np_output, dict):
        return sum(r.dp_output[k] - r.np_output[k] for k in r.np_output)
    return r.dp_output - r.np_output


def utility_pairs(r: RunRecord) -> list[PairedSample]:
    if isinstance(r.np_output, dict):
        return [PairedSample(r.np_output[k], r.dp_output[k]) for k in sorted(r.np_output)]
    return [PairedSample(r.np_output, r.dp_output)]


def _rmspe_or_none(pairs: list[PairedSample], what: str, cell: tuple) -> float | None:
    kept, dropped = nonzero_pairs(pairs)
    if dropped:
        msg = f"{cell}: {dropped} {what} pair(s) with NP = 0 excluded from RMSPE"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return rmspe(kept) if kept else None


def summarize_cell(cell: tuple[str, float, int], records: Sequence[RunRecord],
                   trim: int = grids.TRIM_PER_TAIL) -> MetricSummary:
    task_id, eps, size = cell
    # Sort so that the summary does not depend on record order.
    ok = sorted((r for r in records if r.status == "ok"), key=lambda r: r.rep)
    n_failed = sum(r.status == "failed" for r in records)
    n_skipped = sum(r.status == "skipped" for r in records)
    if len(ok) <= 2 * trim:
        return MetricSummary(task_id, eps, size, None, None, None, len(ok), n_failed, n_skipped,
                             n_used=0, usable=False)

    kept = trim_extremes(ok, trim, trim, key=utility_error)
    utility = _rmspe_or_none([p for r in kept for p in utility_pairs(r)], "utility", cell)

    timed = trim_extremes(ok, trim, trim, key=lambda r: r.dp_time_ns - r.np_time_ns)
    runtime = _rmspe_or_none([PairedSample(float(r.np_time_ns), float(r.dp_time_ns)) for r in timed],
                             "runtime", cell)
    mean_delta = sum(r.dp_time_ns - r.np_time_ns for r in timed) / len(timed)

    np_worst = max(r.np_peak_bytes for r in ok)
    dp_worst = max(r.dp_peak_bytes for r in ok)
    if np_worst > 0:
        memory = overhead_percent(dp_worst, np_worst)
    else:
        memory = None
        warnings.warn(f"{cell}: NP peak memory is 0; memory overhead undefined", RuntimeWarning, stacklevel=2)

    return MetricSummary(task_id, eps, size, utility, runtime, memory, len(ok), n_failed, n_skipped,
                         n_used=len(kept), usable=True, runtime_mean_delta_ns=mean_delta)


def aggregate(records: Iterable[RunRecord], trim: int = grids.TRIM_PER_TAIL) -> list[MetricSummary]:
    records = list(records)
    versions = {r.schema_version for r in records}
    if len(versions) > 1:
        raise SchemaError(f"records mix schema versions {sorted(versions)}")
    cells: dict[tuple, list[RunRecord]] = defaultdict(list)
    for r in records:
        cells[(r.task_id, r.epsilon, r.size)].append(r)
    return [summarize_cell(cell, cells[cell], trim) for cell in sorted(cells)]


def persist_summaries(summaries: Iterable[MetricSummary], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in summaries:
            fh.write(json.dumps(asdict(s), sort_keys=True, allow_nan=False) + "\n")


_SUMMARY_FIELDS = {f.name for f in fields(MetricSummary)}


def load_summaries(path: str | Path) -> list[MetricSummary]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                if not isinstance(doc, dict) or set(doc) != _SUMMARY_FIELDS:
                    raise ValueError("field mismatch")
                out.append(MetricSummary(**doc))
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise SchemaError(f"{path}: line {line_no}: {exc}") from None
    return out


def _cell_value(s: MetricSummary | None, attr: str) -> str:
    if s is None or not s.usable:
        return UNUSABLE
    value = getattr(s, attr)
    return UNUSABLE if value is None else repr(float(value))


def emit_plot_data(summaries: Sequence[MetricSummary], metric: str, shape: str, path: str | Path) -> int:
    """Write a CSV for one metric and return the number of value rows.

    ``grid`` has one ``task,epsilon,size,value`` row per grid point, the full
    epsilon x size product per task, with missing or unusable cells written as
    ``unusable``. ``lines`` has one row per (task, size) with one column per epsilon.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {list(SHAPES)}")
    if not summaries:
        raise ValueError("no summaries to report")
    attr = METRICS[metric]
    by_task: dict[str, dict[tuple[float, int], MetricSummary]] = defaultdict(dict)
    for s in summaries:
        by_task[s.task_id][(s.epsilon, s.size)] = s

    rows = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if shape == "grid":
            writer.writerow(["task", "epsilon", "size", metric])
            for task in sorted(by_task):
                cells = by_task[task]
                for eps in sorted({e for e, _ in cells}):
                    for size in sorted({n for _, n in cells}):
                        writer.writerow([task, repr(eps), size, _cell_value(cells.get((eps, size)), attr)])
                        rows += 1
        else:
            all_eps = sorted({s.epsilon for s in summaries})
            writer.writerow(["task", "size"] + [repr(e) for e in all_eps])
            for task in sorted(by_task):
                cells = by_task[task]
                for size in sorted({n for _, n in cells}):
                    writer.writerow([task, size] + [_cell_value(cells.get((e, size)), attr) for e in all_eps])
                    rows += 1
    return rows
