"""Sweep runner: every (task, eps, size, repetition) cell, NP then DP, under probes."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import grids
from .data import Dataset, DataError, features_and_target, split, subsample
from .dpml import (
    CalibrationError,
    DivergenceError,
    DpSgdParams,
    SgdConfig,
    calibrated_params,
    dp_sgd_train,
    np_sgd_train,
    test_rmse,
)
from .mechanisms import BudgetLedger, PrivacyParams
from .probes import DEFAULT_INTERVAL, ProbeUnavailable, memory_probe, timed_run
from .queries import dp_query, np_query

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REGRESSION = "regression"

# Measured sections never overlap, even if a caller drives several runners.
_MEASURE_LOCK = threading.Lock()


class PlanError(ValueError):
    pass


class RecordFormatError(ValueError):
    pass


_ML_OPTIONS = {"learning_rate", "epochs", "batch_size", "clip_norm", "delta", "train_fraction"}


@dataclass(frozen=True)
class TaskSpec:
    """A query (``kind`` in sum/avg/count/histogram, ``column``) or a regression on ``column``."""

    kind: str
    column: str
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in grids.QUERY_KINDS + (REGRESSION,):
            raise PlanError(f"unknown task kind {self.kind!r}")
        if self.kind != REGRESSION and self.options:
            raise PlanError(f"query task {self.task_id} takes no options")
        bad = set(self.options) - _ML_OPTIONS
        if bad:
            raise PlanError(f"task {self.task_id}: unknown option(s) {sorted(bad)}")

    @property
    def task_id(self) -> str:
        return f"{self.kind}:{self.column}"

    def sgd_config(self, seed: int) -> SgdConfig:
        o = self.options
        return SgdConfig(
            learning_rate=float(o.get("learning_rate", 0.05)),
            epochs=int(o.get("epochs", 20)),
            batch_size=int(o.get("batch_size", 64)),
            seed=seed,
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "column": self.column}
        if self.options:
            out["options"] = dict(self.options)
        return out

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> TaskSpec:
        if not isinstance(doc, dict):
            raise PlanError("each task must be an object")
        bad = set(doc) - {"kind", "column", "options"}
        if bad:
            raise PlanError(f"task: unknown field(s) {sorted(bad)}")
        if "kind" not in doc or "column" not in doc:
            raise PlanError("task needs 'kind' and 'column'")
        return cls(doc["kind"], doc["column"], dict(doc.get("options", {})))


@dataclass(frozen=True)
class ExperimentPlan:
    epsilons: tuple[float, ...] = grids.EPSILONS
    sizes: tuple[int, ...] = grids.HEALTH_SURVEY_SIZES
    tasks: tuple[TaskSpec, ...] = ()
    repetitions: int = grids.QUERY_REPETITIONS
    trim: int = grids.TRIM_PER_TAIL
    master_seed: int = 0
    memory_backend: str = "rss"
    memory_interval: float = DEFAULT_INTERVAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.epsilons or not self.sizes:
            raise PlanError("epsilon and size grids must be nonempty")
        if any(not (e > 0 and math.isfinite(e)) for e in self.epsilons):
            raise PlanError("epsilons must be positive and finite")
        if any(s < 1 for s in self.sizes):
            raise PlanError("sizes must be positive")
        if self.trim < 0 or self.repetitions <= 2 * self.trim:
            raise PlanError(f"repetitions ({self.repetitions}) must exceed 2 * trim ({self.trim})")
        if self.memory_backend not in ("rss", "tracemalloc"):
            raise PlanError(f"unknown memory backend {self.memory_backend!r}")
        if not self.memory_interval > 0:
            raise PlanError("memory_interval must be positive")
        ids = [t.task_id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise PlanError("duplicate task ids")

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["epsilons"] = list(self.epsilons)
        doc["sizes"] = list(self.sizes)
        doc["tasks"] = [t.to_dict() for t in self.tasks]
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> ExperimentPlan:
        if not isinstance(doc, dict):
            raise PlanError("plan must be an object")
        known = {f.name for f in fields(cls)}
        bad = set(doc) - known
        if bad:
            raise PlanError(f"plan: unknown field(s) {sorted(bad)}")
        kwargs = dict(doc)
        if "tasks" in kwargs:
            kwargs["tasks"] = tuple(TaskSpec.from_dict(t) for t in kwargs["tasks"])
        return cls(**kwargs)

    def with_seed(self, seed: int) -> ExperimentPlan:
        return replace(self, master_seed=seed)


def load_plan(path: str | Path) -> ExperimentPlan:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentPlan.from_dict(doc)


def query_tasks(d: Dataset, kinds: Sequence[str] = grids.QUERY_KINDS) -> list[TaskSpec]:
    """Every applicable (query, column) pair.

    HISTOGRAM goes to categorical columns, SUM and AVG to continuous ones, COUNT to all.
    """
    tasks = []
    for meta in d.columns:
        for kind in kinds:
            if kind == "count" or (kind == "histogram") != meta.is_continuous:
                tasks.append(TaskSpec(kind, meta.name))
    return tasks


@dataclass
class RunRecord:
    task_id: str
    epsilon: float
    size: int
    rep: int
    status: str = "ok"
    reason: str | None = None
    np_output: float | dict[str, float] | None = None
    dp_output: float | dict[str, float] | None = None
    np_time_ns: int | None = None
    dp_time_ns: int | None = None
    np_peak_bytes: int | None = None
    dp_peak_bytes: int | None = None
    time_delta_ns: int | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.status not in ("ok", "failed", "skipped"):
            raise ValueError(f"bad status {self.status!r}")
        if self.status == "ok":
            measured = (self.np_output, self.dp_output, self.np_time_ns, self.dp_time_ns,
                        self.np_peak_bytes, self.dp_peak_bytes)
            if any(m is None for m in measured):
                raise ValueError("an ok record needs every output and measurement")
        elif not self.reason:
            raise ValueError(f"a {self.status} record needs a reason")


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from a tuple of plain values."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


@dataclass
class _Measured:
    output: Any
    time_ns: int
    peak_bytes: int | None
    probe_note: str | None = None


class Runner:
    """Executes one plan against one dataset.

    ``execution_log`` collects ``(task_id, phase, start_ns, end_ns)`` for every
    measured section.
    """

    def __init__(self, plan: ExperimentPlan, d: Dataset):
        self.plan = plan
        self.data = d
        self.execution_log: list[tuple[str, str, int, int]] = []
        self._sigma_cache: dict[tuple, DpSgdParams] = {}
        for task in plan.tasks:
            self._check_task(task)

    def _check_task(self, task: TaskSpec) -> None:
        try:
            meta = self.data.meta(task.column)
        except DataError as exc:
            raise PlanError(f"task {task.task_id}: {exc}") from None
        if task.kind == "histogram" and meta.is_continuous:
            raise PlanError(f"task {task.task_id}: HISTOGRAM needs a categorical column")
        if task.kind in ("sum", "avg", REGRESSION) and not meta.is_continuous:
            raise PlanError(f"task {task.task_id}: needs a continuous column")

    def _measure(self, task_id: str, phase: str, make_section: Callable[[], Callable[[], Any]]) -> _Measured:
        plan = self.plan
        with _MEASURE_LOCK:
            start = time.perf_counter_ns()
            try:
                if plan.memory_backend == "rss":
                    try:
                        (out, t_ns), peak = memory_probe(
                            lambda: timed_run(make_section()), plan.memory_interval, "rss"
                        )
                        note = None
                    except ProbeUnavailable as exc:
                        out, t_ns = timed_run(make_section())
                        peak, note = None, f"memory probe unavailable: {exc}"
                else:
                    # tracemalloc distorts timing, so time and memory come from two passes
                    # over identically seeded sections.
                    out, t_ns = timed_run(make_section())
                    _, peak = memory_probe(make_section(), plan.memory_interval, "tracemalloc")
                    note = None
            finally:
                self.execution_log.append((task_id, phase, start, time.perf_counter_ns()))
        return _Measured(out, t_ns, peak, note)

    def _query_cell(self, task: TaskSpec, eps: float, sub: Dataset, noise_seed: int) -> RunRecord:
        def np_section():
            return lambda: np_query(task.kind, sub, task.column).value

        def dp_section():
            ledger = BudgetLedger(PrivacyParams(eps))
            rng = np.random.default_rng(noise_seed)
            return lambda: dp_query(task.kind, sub, task.column, PrivacyParams(eps), ledger, rng).value

        npm = self._measure(task.task_id, "np", np_section)
        dpm = self._measure(task.task_id, "dp", dp_section)
        return self._record(task, eps, sub.size, npm, dpm)

    def _ml_cell(self, task: TaskSpec, eps: float, sub: Dataset, split_seed: int, sgd_seed: int) -> RunRecord:
        o = task.options
        d = Dataset(sub.columns, sub.rows, task.column)
        features_and_target(d)
        train, test = split(d, float(o.get("train_fraction", 0.8)), split_seed)
        cfg = task.sgd_config(sgd_seed)
        key = (task.task_id, train.size, eps)
        if key not in self._sigma_cache:
            self._sigma_cache[key] = calibrated_params(
                train.size, cfg, eps, float(o.get("delta", 1e-5)), float(o.get("clip_norm", 1.0))
            )
        dp = self._sigma_cache[key]

        npm = self._measure(task.task_id, "np", lambda: lambda: np_sgd_train(train, cfg))
        dpm = self._measure(task.task_id, "dp", lambda: lambda: dp_sgd_train(train, cfg, dp))
        npm.output = test_rmse(npm.output, test)
        dpm.output = test_rmse(dpm.output, test)
        return self._record(task, eps, sub.size, npm, dpm)

    def _record(self, task: TaskSpec, eps: float, size: int, npm: _Measured, dpm: _Measured) -> RunRecord:
        note = npm.probe_note or dpm.probe_note
        return RunRecord(
            task_id=task.task_id,
            epsilon=eps,
            size=size,
            rep=-1,
            status="skipped" if note else "ok",
            reason=note,
            np_output=npm.output,
            dp_output=dpm.output,
            np_time_ns=npm.time_ns,
            dp_time_ns=dpm.time_ns,
            np_peak_bytes=npm.peak_bytes,
            dp_peak_bytes=dpm.peak_bytes,
            time_delta_ns=dpm.time_ns - npm.time_ns,
        )

    def run_cell(self, task: TaskSpec, ei: int, si: int, rep: int) -> RunRecord:
        plan = self.plan
        eps, size = plan.epsilons[ei], plan.sizes[si]
        base = (plan.master_seed, task.task_id, ei, si, rep)
        if size > self.data.size:
            return RunRecord(task.task_id, eps, size, rep, status="skipped",
                             reason=f"dataset has {self.data.size} rows, fewer than {size}")
        try:
            sub = subsample(self.data, size, derive_seed(*base, "subsample"))
            if task.kind == REGRESSION:
                rec = self._ml_cell(task, eps, sub, derive_seed(*base, "split"), derive_seed(*base, "sgd"))
            else:
                rec = self._query_cell(task, eps, sub, derive_seed(*base, "noise"))
        except (DivergenceError, CalibrationError, DataError, ArithmeticError, ValueError) as exc:
            log.warning("%s eps=%s size=%s rep=%s failed: %s", task.task_id, eps, size, rep, exc)
            return RunRecord(task.task_id, eps, size, rep, status="failed", reason=f"{type(exc).__name__}: {exc}")
        rec.rep = rep
        return rec

    def run(self, progress: Callable[[RunRecord], None] | None = None) -> list[RunRecord]:
        records = []
        plan = self.plan
        for task in plan.tasks:
            for ei in range(len(plan.epsilons)):
                for si in range(len(plan.sizes)):
                    for rep in range(plan.repetitions):
                        rec = self.run_cell(task, ei, si, rep)
                        records.append(rec)
                        if progress:
                            progress(rec)
        return records


def execute_plan(plan: ExperimentPlan, d: Dataset,
                 progress: Callable[[RunRecord], None] | None = None) -> list[RunRecord]:
    return Runner(plan, d).run(progress)


def _record_to_json(r: RunRecord) -> str:
    return json.dumps(asdict(r), sort_keys=True, allow_nan=False)


def persist_records(records: Iterable[RunRecord], path: str | Path, append: bool = False) -> None:
    with Path(path).open("a" if append else "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(_record_to_json(r) + "\n")


_RECORD_FIELDS = {f.name for f in fields(RunRecord)}


def _record_from_doc(doc: Any) -> RunRecord:
    if not isinstance(doc, dict):
        raise ValueError("record must be an object")
    if set(doc) != _RECORD_FIELDS:
        missing, extra = _RECORD_FIELDS - set(doc), set(doc) - _RECORD_FIELDS
        raise ValueError(f"field mismatch (missing {sorted(missing)}, unexpected {sorted(extra)})")
    return RunRecord(**doc)


def load_records(path: str | Path) -> list[RunRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(_record_from_doc(json.loads(line)))
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise RecordFormatError(f"{path}: line {line_no}: {exc}") from None
    return records
