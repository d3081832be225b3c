"""Utility and overhead metrics: RMSPE, extreme trimming, overhead percent."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")


@dataclass(frozen=True)
class PairedSample:
    np_value: float
    dp_value: float


def rmspe(pairs: Sequence[PairedSample]) -> float:
    """Root mean square percentage error of DP results against NP baselines, in percent."""
    if not pairs:
        raise ValueError("rmspe of an empty list")
    total = 0.0
    for i, p in enumerate(pairs):
        if p.np_value == 0:
            raise ZeroDivisionError(f"pair {i} has NP value 0; percentage error undefined")
        rel = (p.np_value - p.dp_value) / p.np_value
        total += rel * rel
    return math.sqrt(total / len(pairs)) * 100.0


def trim_extremes(
    values: Sequence[T],
    k_low: int = 1,
    k_high: int = 1,
    key: Callable[[T], float] | None = None,
) -> list[T]:
    """Drop the ``k_low`` lowest and ``k_high`` highest items, keeping input order.

    ``key`` maps an item to its signed error (DP minus NP); by default the
    items are the errors themselves. Ties are broken by position.
    """
    if k_low < 0 or k_high < 0:
        raise ValueError("trim counts must be nonnegative")
    n = len(values)
    if n <= k_low + k_high:
        raise ValueError(f"cannot trim {k_low}+{k_high} from {n} values")
    key = key or (lambda v: v)
    order = sorted(range(n), key=lambda i: (key(values[i]), i))
    dropped = set(order[:k_low]) | set(order[n - k_high :])
    return [v for i, v in enumerate(values) if i not in dropped]


def overhead_percent(dp_peak: float, np_peak: float) -> float:
    if dp_peak < 0:
        raise ValueError("dp_peak must be >= 0")
    if not np_peak > 0:
        raise ZeroDivisionError("NP peak must be positive")
    return (dp_peak - np_peak) / np_peak * 100.0


def nonzero_pairs(pairs: Iterable[PairedSample]) -> tuple[list[PairedSample], int]:
    """Pairs usable by :func:`rmspe`, plus how many were dropped for NP == 0."""
    kept, dropped = [], 0
    for p in pairs:
        if p.np_value == 0:
            dropped += 1
        else:
            kept.append(p)
    return kept, dropped
