"""Noise samplers, clamping and the Laplace mechanism with a budget ledger.

Laplace sampling is the textbook floating-point inverse-CDF construction.
It is not hardened against floating-point side channels (no snapping);
these mechanisms exist to measure utility and overhead, not to protect
real data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


class BudgetExhausted(RuntimeError):
    pass


class RandomStream(Protocol):
    """The subset of ``numpy.random.Generator`` the samplers rely on."""

    def random(self, size=None): ...

    def standard_normal(self, size=None): ...


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a positive finite number, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class NoiseSpec:
    family: str
    scale: float

    def __post_init__(self) -> None:
        if self.family not in ("laplace", "gaussian"):
            raise ValueError(f"unknown noise family {self.family!r}")
        if not self.scale > 0:
            raise ValueError(f"noise scale must be positive, got {self.scale}")

    def sample(self, rng: RandomStream, size=None):
        if self.family == "laplace":
            return laplace_sample(self.scale, rng, size)
        return gaussian_sample(self.scale, rng, size)


# Relative slack on budget comparisons so that e.g. 0.5 + 0.25 + 0.25 fits in 1.0.
_BUDGET_RTOL = 1e-12


@dataclass
class BudgetLedger:
    """Sequential-composition accountant for one experiment run."""

    total: PrivacyParams
    spent_epsilon: float = 0.0
    spent_delta: float = 0.0
    entries: list[tuple[str, float, float]] = field(default_factory=list)

    @property
    def remaining_epsilon(self) -> float:
        return self.total.epsilon - self.spent_epsilon

    def can_spend(self, epsilon: float, delta: float = 0.0) -> bool:
        eps_ok = self.spent_epsilon + epsilon <= self.total.epsilon * (1 + _BUDGET_RTOL)
        delta_ok = self.spent_delta + delta <= self.total.delta * (1 + _BUDGET_RTOL)
        return eps_ok and delta_ok

    def spend(self, label: str, epsilon: float, delta: float = 0.0) -> None:
        if epsilon < 0 or delta < 0:
            raise ValueError("cannot spend a negative budget")
        if not self.can_spend(epsilon, delta):
            raise BudgetExhausted(
                f"{label}: requested (eps={epsilon}, delta={delta}) but only "
                f"(eps={self.remaining_epsilon:.6g}, delta={self.total.delta - self.spent_delta:.6g}) remains"
            )
        self.spent_epsilon += epsilon
        self.spent_delta += delta
        self.entries.append((label, epsilon, delta))


def laplace_sample(scale: float, rng: RandomStream, size=None):
    """Draw from Laplace(0, scale) by inverting the CDF.

    ``u = U - 1/2`` with ``U ~ Uniform[0, 1)``; the single point ``U == 0``
    (which maps to -inf) is redrawn, so ``u`` is uniform on the open
    interval (-1/2, 1/2) and ``u == 0`` maps to exactly 0.
    """
    if not scale > 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")
    if size is None:
        uni = rng.random()
        while uni == 0.0:
            uni = rng.random()
        u = uni - 0.5
        return -scale * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u)) if u != 0.0 else 0.0
    uni = np.asarray(rng.random(size), dtype=float)
    zeros = uni == 0.0
    while zeros.any():
        uni[zeros] = rng.random(int(zeros.sum()))
        zeros = uni == 0.0
    u = uni - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def gaussian_sample(sigma: float, rng: RandomStream, size=None):
    if not sigma > 0:
        raise ValueError(f"Gaussian sigma must be positive, got {sigma}")
    if size is None:
        return sigma * float(rng.standard_normal())
    return sigma * np.asarray(rng.standard_normal(size), dtype=float)


def clamp(value, lower: float, upper: float):
    """``min(max(value, lower), upper)``; works elementwise on arrays."""
    if lower > upper:
        raise ValueError(f"inverted bounds [{lower}, {upper}]")
    if np.ndim(value):
        return np.clip(value, lower, upper)
    return min(max(value, lower), upper)


def laplace_mechanism(
    true_value: float,
    sensitivity: float,
    budget: PrivacyParams,
    ledger: BudgetLedger,
    rng: RandomStream,
    label: str = "laplace",
) -> float:
    if not sensitivity > 0:
        raise ValueError(f"sensitivity must be positive, got {sensitivity}")
    if budget.delta != 0:
        raise ValueError("the Laplace mechanism gives pure DP; budget.delta must be 0")
    # Spend only after every argument check so a failed call leaves the ledger untouched.
    ledger.spend(label, budget.epsilon)
    return true_value + laplace_sample(sensitivity / budget.epsilon, rng)
