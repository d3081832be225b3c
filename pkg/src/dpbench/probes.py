"""Wall-time and peak-memory probes around a critical section."""

from __future__ import annotations

import threading
import time
import tracemalloc
from dataclasses import dataclass
from typing import Callable, TypeVar

try:
    import psutil
except ImportError:  # pragma: no cover - exercised only on exotic platforms
    psutil = None

T = TypeVar("T")

DEFAULT_INTERVAL = 0.01


class ProbeUnavailable(RuntimeError):
    pass


def timed_run(section: Callable[[], T]) -> tuple[T, int]:
    """Run ``section`` and return its result with the elapsed monotonic time in ns.

    Exceptions propagate; no partial timing is reported.
    """
    start = time.perf_counter_ns()
    out = section()
    return out, time.perf_counter_ns() - start


def _rss_reader() -> Callable[[], int]:
    if psutil is None:
        raise ProbeUnavailable("psutil is not installed")
    try:
        proc = psutil.Process()
        proc.memory_info()
    except Exception as exc:  # psutil raises platform-specific errors
        raise ProbeUnavailable(f"cannot read resident memory: {exc}") from exc
    return lambda: proc.memory_info().rss


class _Sampler(threading.Thread):
    def __init__(self, read: Callable[[], int], interval: float):
        super().__init__(daemon=True)
        self.read = read
        self.interval = interval
        self.peak = 0
        self._stop_evt = threading.Event()

    def run(self) -> None:
        while not self._stop_evt.wait(self.interval):
            self.peak = max(self.peak, self.read())

    def stop(self) -> None:
        self._stop_evt.set()
        self.join()


def memory_probe(section: Callable[[], T], interval: float = DEFAULT_INTERVAL,
                 backend: str = "rss") -> tuple[T, int]:
    """Run ``section`` and return its result with its peak memory above baseline, in bytes.

    ``rss`` samples the process resident set every ``interval`` seconds from a
    background thread (plus once at each end). ``tracemalloc`` reports the
    exact peak of Python-tracked allocations, numpy buffers included, at the
    price of slowing the section down.
    """
    if not interval > 0:
        raise ValueError("interval must be positive")
    if backend == "tracemalloc":
        return _tracemalloc_probe(section)
    if backend != "rss":
        raise ValueError(f"unknown memory backend {backend!r}")
    read = _rss_reader()
    baseline = read()
    sampler = _Sampler(read, interval)
    sampler.peak = baseline
    sampler.start()
    try:
        out = section()
        sampler.peak = max(sampler.peak, read())
    finally:
        sampler.stop()
    return out, max(0, sampler.peak - baseline)


def _tracemalloc_probe(section: Callable[[], T]) -> tuple[T, int]:
    started = not tracemalloc.is_tracing()
    if started:
        tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        baseline, _ = tracemalloc.get_traced_memory()
        out = section()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if started:
            tracemalloc.stop()
    return out, max(0, peak - baseline)


@dataclass(frozen=True)
class Probe:
    kind: str
    interval: float = DEFAULT_INTERVAL

    def __post_init__(self) -> None:
        if self.kind not in ("time", "memory"):
            raise ValueError(f"unknown probe kind {self.kind!r}")
        if not self.interval > 0:
            raise ValueError("interval must be positive")

    def run(self, section: Callable[[], T]) -> tuple[T, int]:
        if self.kind == "time":
            return timed_run(section)
        return memory_probe(section, self.interval)
