"""
Data generating processes used in the coverage experiments.

Three zero-mean stationary recursions driven by i.i.d. N(0, 1) innovations:

* ARCH(1): ``X_i = e_i * sqrt(1 + a * X_{i-1}**2)``
* MA(1):   ``X_i = e_i + a * e_{i-1}``
* AR(1):   ``X_i = a * X_{i-1} + e_i``

All recursions start from a zero state and discard ``burn_in`` leading values.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit
from scipy.signal import lfilter

from dblboot.smooth import EstimatorKind

__all__ = ["ModelKind", "ModelSpec", "generate", "simulate", "true_value"]


class ModelKind(str, Enum):
    ARCH1 = "arch1"
    MA1 = "ma1"
    AR1 = "ar1"


@dataclass(frozen=True)
class ModelSpec:
    """A stationary scalar process.

    Parameters
    ----------
    kind : ModelKind
        Recursion type.
    coefficient : float
        The single model coefficient ``a``. Must satisfy ``|a| < 1`` for AR(1)
        and MA(1), and ``0 <= a < 1`` for ARCH(1).
    burn_in : int
        Number of initial values discarded; at least 100.
    """

    kind: ModelKind
    coefficient: float = 0.3
    burn_in: int = 500

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ModelKind(self.kind))
        a = float(self.coefficient)
        object.__setattr__(self, "coefficient", a)
        if self.kind is ModelKind.ARCH1:
            if not 0.0 <= a < 1.0:
                raise ValueError(f"ARCH(1) coefficient must lie in [0, 1), got {a}")
        elif not abs(a) < 1.0:
            raise ValueError(f"{self.kind.value} coefficient must satisfy |a| < 1, got {a}")
        if int(self.burn_in) != self.burn_in or self.burn_in < 100:
            raise ValueError(f"burn_in must be an integer >= 100, got {self.burn_in}")
        object.__setattr__(self, "burn_in", int(self.burn_in))

    @property
    def label(self) -> str:
        if self.coefficient == 0.3:
            return self.kind.value
        return f"{self.kind.value}({self.coefficient:g})"


@njit(cache=True)
def _arch_recursion(e: np.ndarray, a: float) -> np.ndarray:
    x = np.empty_like(e)
    prev = 0.0
    for i in range(e.shape[0]):
        prev = e[i] * np.sqrt(1.0 + a * prev * prev)
        x[i] = prev
    return x


def _run(kind: ModelKind, a: float, e: np.ndarray) -> np.ndarray:
    if kind is ModelKind.AR1:
        return lfilter([1.0], [1.0, -a], e)
    if kind is ModelKind.MA1:
        x = e.copy()
        x[1:] += a * e[:-1]
        return x
    return _arch_recursion(e, a)


def generate(model: ModelSpec, n: int, innovations, *, burn_in: int | None = None) -> np.ndarray:
    """
    Run the model recursion over an explicit innovation stream.

    Parameters
    ----------
    model : ModelSpec
    n : int
        Number of observations returned, ``n >= 2``.
    innovations : array_like
        At least ``burn_in + n`` innovations; only the first ``burn_in + n``
        are consumed.
    burn_in : int, optional
        Overrides ``model.burn_in`` (mainly so tests can drive the recursion
        with hand-chosen values).

    Returns
    -------
    ndarray
        The last ``n`` values of the recursion started from zero state.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    burn = model.burn_in if burn_in is None else int(burn_in)
    e = np.asarray(innovations, dtype=np.float64).ravel()
    if e.shape[0] < burn + n:
        raise ValueError(f"need {burn + n} innovations, got {e.shape[0]}")
    x = _run(model.kind, model.coefficient, e[: burn + n])[burn:]
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{model.kind.value} recursion produced non-finite values")
    return x


def simulate(model: ModelSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``burn_in + n`` standard normals from `rng` and run `generate`."""
    return generate(model, n, rng.standard_normal(model.burn_in + n))


def true_value(model: ModelSpec, target: EstimatorKind | str) -> float:
    """Population value of the target parameter under `model`."""
    target = EstimatorKind(target)
    a = model.coefficient
    if target is EstimatorKind.MEAN:
        return 0.0
    if model.kind is ModelKind.AR1:
        return 1.0 / (1.0 - a * a) if target is EstimatorKind.VARIANCE else a
    if model.kind is ModelKind.MA1:
        return 1.0 + a * a if target is EstimatorKind.VARIANCE else a / (1.0 + a * a)
    # ARCH(1) is a martingale difference: uncorrelated, variance solves v = 1 + a v
    return 1.0 / (1.0 - a) if target is EstimatorKind.VARIANCE else 0.0
