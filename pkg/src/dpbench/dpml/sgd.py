"""Linear regression by SGD, with and without DP-SGD.

Both trainers share one loop and one Poisson batch schedule. Each step samples
every row independently with probability ``q = batch_size / n``; the private
variant clips each per-sample gradient to L2 norm ``C``, adds
``N(0, (sigma C)^2)`` to every coordinate of the summed gradient, and divides
by the expected batch size.

Training happens on features and target rescaled to [-1, 1] with their
metadata bounds; returned models are mapped back to the original units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import Dataset, DataError, features_and_target
from ..mechanisms import PrivacyParams
from .accountant import calibrate_sigma

DEFAULT_DELTA = 1e-5


class DivergenceError(ArithmeticError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.05
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class DpSgdParams:
    clip_norm: float = 1.0
    noise_multiplier: float = 0.0
    target: PrivacyParams | None = None

    def __post_init__(self) -> None:
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if not self.noise_multiplier >= 0:
            raise ValueError("noise_multiplier must be >= 0")
        if self.noise_multiplier > 0 and math.isinf(self.clip_norm):
            raise ValueError("an infinite clip norm is only allowed with zero noise")


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    features: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w)) or not math.isfinite(self.bias):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "weights", w)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights + self.bias

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinearModel):
            return NotImplemented
        return (
            self.features == other.features
            and self.bias == other.bias
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


def per_sample_gradient(model: LinearModel, x, y: float) -> np.ndarray:
    """Gradient of ``0.5 (w.x + b - y)^2`` with respect to ``(w, b)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != model.weights.shape:
        raise ValueError(f"feature vector has shape {x.shape}, model expects {model.weights.shape}")
    residual = float(x @ model.weights + model.bias - y)
    return residual * np.append(x, 1.0)


def clip_l2(g, clip_norm: float) -> np.ndarray:
    """Scale ``g`` by ``min(1, C / ||g||_2)``; the zero vector is returned unchanged."""
    if not clip_norm > 0:
        raise ValueError("clip_norm must be positive")
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm <= clip_norm:
        return g.copy()
    return g * (clip_norm / norm)


@dataclass(frozen=True)
class _Scaling:
    features: tuple[str, ...]
    x_center: np.ndarray
    x_half: np.ndarray
    y_center: float
    y_half: float

    @classmethod
    def from_meta(cls, d: Dataset) -> _Scaling:
        feats, target = features_and_target(d)
        metas = [d.meta(f) for f in feats]
        t = d.meta(target)
        return cls(
            tuple(feats),
            np.array([(m.lower + m.upper) / 2 for m in metas]),
            np.array([(m.upper - m.lower) / 2 for m in metas]),
            (t.lower + t.upper) / 2,
            (t.upper - t.lower) / 2,
        )

    def arrays(self, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
        x = np.column_stack([d.column(f) for f in self.features])
        x = np.clip((x - self.x_center) / self.x_half, -1.0, 1.0)
        y = np.clip((d.column(d.target) - self.y_center) / self.y_half, -1.0, 1.0)
        return x, y

    def to_raw(self, theta: np.ndarray) -> LinearModel:
        w_std, b_std = theta[:-1], theta[-1]
        w = self.y_half * w_std / self.x_half
        b = self.y_center + self.y_half * b_std - float(np.dot(w, self.x_center))
        return LinearModel(w, float(b), self.features)


def random_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(batch-schedule stream, gradient-noise stream) for a training seed."""
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def schedule(n: int, cfg: SgdConfig) -> tuple[float, int]:
    """Sampling rate and total number of steps for ``n`` training rows."""
    if n < 1:
        raise DataError("empty training set")
    if cfg.batch_size > n:
        raise DataError(f"batch_size {cfg.batch_size} exceeds training size {n}")
    q = cfg.batch_size / n
    steps_per_epoch = max(1, round(n / cfg.batch_size))
    return q, cfg.epochs * steps_per_epoch


def _train(x: np.ndarray, y: np.ndarray, cfg: SgdConfig, dp: DpSgdParams | None,
           history: list[float] | None) -> np.ndarray:
    n, p = x.shape
    q, steps = schedule(n, cfg)
    steps_per_epoch = steps // cfg.epochs
    expected_batch = q * n
    batch_rng, noise_rng = random_streams(cfg.seed)
    theta = np.zeros(p + 1)
    xa = np.column_stack([x, np.ones(n)])

    if history is not None:
        history.append(0.5 * float(np.mean((xa @ theta - y) ** 2)))
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(steps):
            theta = _step(theta, step, xa, y, q, expected_batch, cfg, dp, batch_rng, noise_rng)
            if history is not None and (step + 1) % steps_per_epoch == 0:
                history.append(0.5 * float(np.mean((xa @ theta - y) ** 2)))
    return theta


def _step(theta, step, xa, y, q, expected_batch, cfg, dp, batch_rng, noise_rng):
    idx = np.flatnonzero(batch_rng.random(xa.shape[0]) < q)
    xb = xa[idx]
    residual = xb @ theta - y[idx]
    if residual.size:
        loss = 0.5 * float(np.mean(residual * residual))
        if not math.isfinite(loss):
            raise DivergenceError(step, loss)
    grads = residual[:, None] * xb
    if dp is not None:
        norms = np.linalg.norm(grads, axis=1)
        # With an infinite clip norm the factor is exactly 1.0, so the sum matches the NP path bit for bit.
        factor = np.minimum(1.0, dp.clip_norm / np.maximum(norms, np.finfo(float).tiny))
        grads = grads * factor[:, None]
    total = grads.sum(axis=0)
    if dp is not None and dp.noise_multiplier > 0:
        total = total + dp.noise_multiplier * dp.clip_norm * noise_rng.standard_normal(theta.size)
    theta = theta - cfg.learning_rate * (total / expected_batch)
    if not np.all(np.isfinite(theta)):
        raise DivergenceError(step, math.inf)
    return theta


def np_sgd_train(train: Dataset, cfg: SgdConfig, history: list[float] | None = None) -> LinearModel:
    """Non-private twin of :func:`dp_sgd_train` on the same batch schedule.

    ``history``, if given, receives the full-data training loss (in scaled
    units) before training and after each epoch.
    """
    scaling = _Scaling.from_meta(train)
    x, y = scaling.arrays(train)
    return scaling.to_raw(_train(x, y, cfg, None, history))


def dp_sgd_train(train: Dataset, cfg: SgdConfig, dp: DpSgdParams,
                 history: list[float] | None = None) -> LinearModel:
    scaling = _Scaling.from_meta(train)
    x, y = scaling.arrays(train)
    return scaling.to_raw(_train(x, y, cfg, dp, history))


def calibrated_params(n_train: int, cfg: SgdConfig, epsilon: float, delta: float = DEFAULT_DELTA,
                      clip_norm: float = 1.0) -> DpSgdParams:
    """DP-SGD parameters whose noise multiplier meets ``(epsilon, delta)`` for this schedule."""
    target = PrivacyParams(epsilon, delta)
    q, steps = schedule(n_train, cfg)
    return DpSgdParams(clip_norm, calibrate_sigma(target, q, steps), target)


def test_rmse(model: LinearModel, test: Dataset) -> float:
    if test.size == 0:
        raise DataError("empty test set")
    if test.target is None:
        raise DataError("test set has no target column")
    x = np.column_stack([test.column(f) for f in model.features])
    err = model.predict(x) - test.column(test.target)
    return float(np.sqrt(np.mean(err * err)))


test_rmse.__test__ = False  # keep pytest from collecting it when imported into tests
