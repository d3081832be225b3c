"""SUM, COUNT, AVG and HISTOGRAM in exact and Laplace-noised form.

Sensitivities follow the add/remove-one neighbouring relation and come from
column metadata only: 1 for COUNT and each histogram bin, ``max(|L|, |U|)``
for a SUM clamped to ``[L, U]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DataError
from .mechanisms import (
    BudgetExhausted,
    BudgetLedger,
    PrivacyParams,
    RandomStream,
    clamp,
    laplace_mechanism,
    laplace_sample,
)

KINDS = ("sum", "count", "avg", "histogram")


class HistogramEligibilityError(DataError):
    pass


@dataclass(frozen=True)
class QueryResult:
    kind: str
    scalar: float | None = None
    bins: dict[str, float] | None = None
    budget_spent: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if (self.scalar is None) == (self.bins is None):
            raise ValueError("exactly one of scalar and bins must be set")

    @property
    def value(self) -> float | dict[str, float]:
        return self.scalar if self.bins is None else self.bins


def _check_column(kind: str, d: Dataset, column: str):
    if kind not in KINDS:
        raise ValueError(f"unknown query kind {kind!r}")
    meta = d.meta(column)
    if kind == "histogram" and meta.is_continuous:
        raise HistogramEligibilityError(
            f"HISTOGRAM needs a categorical column; {column!r} is continuous"
        )
    if kind in ("sum", "avg") and not meta.is_continuous:
        raise DataError(f"{kind.upper()} needs a continuous column; {column!r} is categorical")
    return meta


def np_query(kind: str, d: Dataset, column: str) -> QueryResult:
    meta = _check_column(kind, d, column)
    if kind == "count":
        return QueryResult(kind, scalar=float(d.size))
    if kind == "histogram":
        values = d.column(column)
        return QueryResult(kind, bins={c: float(np.count_nonzero(values == c)) for c in meta.categories})
    values = d.column(column)
    if kind == "sum":
        return QueryResult(kind, scalar=float(values.sum()))
    if d.size == 0:
        raise DataError("AVG over an empty dataset")
    return QueryResult(kind, scalar=float(values.mean()))


def _sum_sensitivity(lower: float, upper: float) -> float:
    return max(abs(lower), abs(upper))


def dp_count(d: Dataset, column: str, budget: PrivacyParams, ledger: BudgetLedger,
             rng: RandomStream) -> QueryResult:
    _check_column("count", d, column)
    value = laplace_mechanism(float(d.size), 1.0, budget, ledger, rng, label=f"count:{column}")
    return QueryResult("count", scalar=value, budget_spent=(budget.epsilon, 0.0))


def dp_sum(d: Dataset, column: str, budget: PrivacyParams, ledger: BudgetLedger,
           rng: RandomStream) -> QueryResult:
    meta = _check_column("sum", d, column)
    clamped = clamp(d.column(column), meta.lower, meta.upper)
    value = laplace_mechanism(float(np.sum(clamped)), _sum_sensitivity(meta.lower, meta.upper),
                              budget, ledger, rng, label=f"sum:{column}")
    return QueryResult("sum", scalar=value, budget_spent=(budget.epsilon, 0.0))


def dp_avg(d: Dataset, column: str, budget: PrivacyParams, ledger: BudgetLedger,
           rng: RandomStream) -> QueryResult:
    """Noisy clamped sum over noisy count, each at half the budget.

    The denominator is floored at 1 so a small or negative noisy count
    cannot blow up or flip the estimate.
    """
    meta = _check_column("avg", d, column)
    if d.size < 1:
        raise DataError("AVG over an empty dataset")
    if budget.delta != 0:
        raise ValueError("the Laplace mechanism gives pure DP; budget.delta must be 0")
    if not ledger.can_spend(budget.epsilon):
        raise BudgetExhausted(
            f"avg:{column}: requested eps={budget.epsilon} but only {ledger.remaining_epsilon:.6g} remains"
        )
    half = PrivacyParams(budget.epsilon / 2)
    clamped = clamp(d.column(column), meta.lower, meta.upper)
    noisy_sum = laplace_mechanism(float(np.sum(clamped)), _sum_sensitivity(meta.lower, meta.upper),
                                  half, ledger, rng, label=f"avg:sum:{column}")
    noisy_count = laplace_mechanism(float(d.size), 1.0, half, ledger, rng, label=f"avg:count:{column}")
    return QueryResult("avg", scalar=noisy_sum / max(1.0, noisy_count), budget_spent=(budget.epsilon, 0.0))


def dp_histogram(d: Dataset, column: str, budget: PrivacyParams, ledger: BudgetLedger,
                 rng: RandomStream) -> QueryResult:
    """Per-category counts with independent Laplace(1/eps) noise.

    Bins partition the rows, so the whole histogram costs eps once
    (parallel composition) and is recorded as a single ledger entry.
    """
    meta = _check_column("histogram", d, column)
    if budget.delta != 0:
        raise ValueError("the Laplace mechanism gives pure DP; budget.delta must be 0")
    ledger.spend(f"histogram:{column}", budget.epsilon)
    exact = np_query("histogram", d, column).bins
    noise = laplace_sample(1.0 / budget.epsilon, rng, size=len(meta.categories))
    bins = {c: exact[c] + float(z) for c, z in zip(meta.categories, noise)}
    return QueryResult("histogram", bins=bins, budget_spent=(budget.epsilon, 0.0))


_DP = {"count": dp_count, "sum": dp_sum, "avg": dp_avg, "histogram": dp_histogram}


def dp_query(kind: str, d: Dataset, column: str, budget: PrivacyParams, ledger: BudgetLedger,
             rng: RandomStream) -> QueryResult:
    try:
        fn = _DP[kind]
    except KeyError:
        raise ValueError(f"unknown query kind {kind!r}") from None
    return fn(d, column, budget, ledger, rng)
