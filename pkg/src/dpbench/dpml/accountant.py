"""Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

Only integer orders are supported. For an integer order ``a >= 2`` the RDP of
one step with sampling rate ``q`` and noise multiplier ``sigma`` is bounded by

    log( sum_{i=0..a} C(a, i) (1-q)^(a-i) q^i exp((i^2 - i) / (2 sigma^2)) ) / (a - 1)

which reduces to ``a / (2 sigma^2)`` at ``q = 1``. RDP composes additively
over steps and converts to (eps, delta) by minimising over orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from ..mechanisms import PrivacyParams

DEFAULT_ORDERS: tuple[int, ...] = tuple(range(2, 65)) + (80, 96, 128, 192, 256)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class RdpCurve:
    orders: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.orders) != len(self.values):
            raise ValueError("orders and values differ in length")
        for v in self.values:
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"RDP values must be finite and nonnegative, got {v}")


def _check_orders(orders: Sequence[float]) -> tuple[int, ...]:
    out = []
    for a in orders:
        if a < 2 or int(a) != a:
            raise ValueError(f"orders must be integers >= 2, got {a}")
        out.append(int(a))
    if not out:
        raise ValueError("need at least one order")
    return tuple(out)


def _log_a(q: float, sigma: float, alpha: int) -> float:
    i = np.arange(alpha + 1, dtype=float)
    log_binom = gammaln(alpha + 1) - gammaln(i + 1) - gammaln(alpha - i + 1)
    terms = log_binom + i * math.log(q) + (alpha - i) * math.log1p(-q) + (i * i - i) / (2 * sigma**2)
    return float(logsumexp(terms))


def _rdp_one_step(q: float, sigma: float, alpha: int) -> float:
    if q == 1.0:
        return alpha / (2 * sigma**2)
    # The bound is a log of a quantity >= 1; guard tiny negative rounding.
    return max(0.0, _log_a(q, sigma, alpha) / (alpha - 1))


def rdp_subsampled_gaussian(sigma: float, q: float, steps: int,
                            orders: Sequence[float] = DEFAULT_ORDERS) -> RdpCurve:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not 0 < q <= 1:
        raise ValueError(f"sampling rate must lie in (0, 1], got {q}")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    alphas = _check_orders(orders)
    return RdpCurve(alphas, tuple(steps * _rdp_one_step(q, sigma, a) for a in alphas))


def rdp_to_epsilon(curve: RdpCurve, delta: float) -> float:
    if not curve.orders:
        raise ValueError("empty RDP curve")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    log_inv_delta = math.log(1 / delta)
    return min(r + log_inv_delta / (a - 1) for a, r in zip(curve.orders, curve.values))


def epsilon_for(sigma: float, q: float, steps: int, delta: float,
                orders: Sequence[float] = DEFAULT_ORDERS) -> float:
    return rdp_to_epsilon(rdp_subsampled_gaussian(sigma, q, steps, orders), delta)


def calibrate_sigma(
    target: PrivacyParams,
    q: float,
    steps: int,
    orders: Sequence[float] = DEFAULT_ORDERS,
    lower: float = 0.3,
    upper: float = 100.0,
    tol: float = 1e-2,
) -> float:
    """Smallest noise multiplier in ``[lower, upper]`` whose accounted eps is within target.

    Bisection narrows the bracket until it is ~1e-10 wide, so the achieved
    eps sits just below ``target.epsilon``; the result is rejected if it falls
    short of ``target.epsilon * (1 - tol)``.
    """
    eps_star = target.epsilon
    delta = target.delta
    if not 0 < delta < 1:
        raise ValueError(f"calibration needs delta in (0, 1), got {delta}")

    def eps_at(sigma: float) -> float:
        return epsilon_for(sigma, q, steps, delta, orders)

    eps_lo, eps_hi = eps_at(lower), eps_at(upper)
    if eps_hi > eps_star:
        raise CalibrationError(
            f"eps={eps_star} unreachable: sigma={upper} still gives eps={eps_hi:.6g} "
            f"(sigma={lower} gives {eps_lo:.6g})"
        )
    if eps_lo <= eps_star:
        if eps_lo >= eps_star * (1 - tol):
            return lower
        raise CalibrationError(
            f"eps={eps_star} unreachable: sigma={lower} already gives eps={eps_lo:.6g} "
            f"(sigma={upper} gives {eps_hi:.6g})"
        )
    lo, hi = lower, upper
    for _ in range(200):
        if hi - lo <= 1e-10 * hi:
            break
        mid = 0.5 * (lo + hi)
        if eps_at(mid) > eps_star:
            lo = mid
        else:
            hi = mid
    achieved = eps_at(hi)
    if achieved < eps_star * (1 - tol):
        raise CalibrationError(f"bisection ended at eps={achieved:.6g}, outside tolerance of {eps_star}")
    return hi
