"""
Estimators in the smooth function model.

Each estimator is written as ``theta_hat = H(mean(Y))`` where ``Y`` is a
d-variate lift of the raw series. The resampling code only ever sees ``Y`` and
``H``, so one engine serves every estimator.

``H`` and its gradient act on the last axis and broadcast over any leading
axes. Where ``H`` is undefined they return NaN; callers decide whether that is
an error.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from dblboot.exceptions import DegenerateSampleError

__all__ = [
    "EstimatorKind",
    "SmoothEstimator",
    "make_estimator",
    "transform",
    "plug_in",
]


class EstimatorKind(str, Enum):
    MEAN = "mean"
    VARIANCE = "variance"
    LAG1 = "lag1"


@dataclass(frozen=True)
class SmoothEstimator:
    kind: EstimatorKind
    dim: int
    lift: Callable[[np.ndarray], np.ndarray]
    H: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    min_length: int = 2

    def transform(self, series) -> np.ndarray:
        return transform(series, self)


def _mean_lift(x):
    return x[:, None]


def _mean_h(m):
    return np.asarray(m, dtype=float)[..., 0]


def _mean_grad(m):
    return np.ones_like(np.asarray(m, dtype=float))


def _var_lift(x):
    return np.column_stack((x, x * x))


def _var_h(m):
    m = np.asarray(m, dtype=float)
    return m[..., 1] - m[..., 0] ** 2


def _var_grad(m):
    m = np.asarray(m, dtype=float)
    return np.stack((-2.0 * m[..., 0], np.ones_like(m[..., 1])), axis=-1)


def _lag1_lift(x):
    head = x[:-1]
    return np.column_stack((head, head * head, head * x[1:]))


def _lag1_denominator(m):
    return m[..., 1] - m[..., 0] ** 2


def _lag1_h(m):
    m = np.asarray(m, dtype=float)
    den = _lag1_denominator(m)
    num = m[..., 2] - m[..., 0] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def _lag1_grad(m):
    m = np.asarray(m, dtype=float)
    m1, m2, m3 = m[..., 0], m[..., 1], m[..., 2]
    den = _lag1_denominator(m)
    ok = den > 0
    den = np.where(ok, den, np.nan)
    g = np.stack(
        (
            2.0 * m1 * (m3 - m2) / den**2,
            -(m3 - m1**2) / den**2,
            1.0 / den,
        ),
        axis=-1,
    )
    return g


_REGISTRY = {
    EstimatorKind.MEAN: (1, _mean_lift, _mean_h, _mean_grad, 2),
    EstimatorKind.VARIANCE: (2, _var_lift, _var_h, _var_grad, 2),
    EstimatorKind.LAG1: (3, _lag1_lift, _lag1_h, _lag1_grad, 3),
}


def make_estimator(kind: EstimatorKind | str) -> SmoothEstimator:
    """
    Build the smooth-function representation of a paper estimator.

    ``mean``: Y = X, H(m) = m.
    ``variance``: Y = (X, X^2), H(m) = m2 - m1^2 (divide-by-n variance).
    ``lag1``: Y_i = (X_i, X_i^2, X_i X_{i+1}) for i < n,
    H(m) = (m3 - m1^2) / (m2 - m1^2).
    """
    kind = EstimatorKind(kind)
    dim, lift, h, grad, min_len = _REGISTRY[kind]
    return SmoothEstimator(kind, dim, lift, h, grad, min_len)


def transform(series, est: SmoothEstimator) -> np.ndarray:
    """Lift a raw series to the ``(m, d)`` array the estimator averages."""
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.shape[0] < est.min_length:
        raise ValueError(
            f"series too short for {est.kind.value}: need at least "
            f"{est.min_length} observations, got {x.shape[0]}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    return est.lift(x)


def plug_in(series, est: SmoothEstimator) -> float:
    """Plug-in estimate ``H(mean(transform(series)))``."""
    y = transform(series, est)
    value = float(est.H(y.mean(axis=0)))
    if not np.isfinite(value):
        raise DegenerateSampleError(f"{est.kind.value} undefined on this sample")
    return value
