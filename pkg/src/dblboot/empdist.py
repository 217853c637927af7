"""Empirical distributions of Monte Carlo pivots."""
from __future__ import annotations

import math

import numpy as np

__all__ = ["EmpiricalDistribution", "order_index"]


def order_index(q: float, size: int) -> int:
    """
    0-based position of the ``ceil(q * size)``-th order statistic.

    The rank is clamped to ``[1, size]``, so ``q = 0`` and ``q = 1`` map to
    the minimum and maximum. ``q * size`` is rounded to 9 decimals before the
    ceiling so that e.g. ``0.95 * 500`` is rank 475 and not 476.
    """
    rank = math.ceil(round(q * size, 9))
    return min(max(rank, 1), size) - 1


class EmpiricalDistribution:
    """
    Sorted sample with a step CDF and a ceiling order-statistic quantile.

    ``quantile(q)`` returns ``x_(ceil(qB))`` (no interpolation) and ``cdf(x)``
    returns the fraction of samples ``<= x``.
    """

    def __init__(self, samples) -> None:
        s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
        if s.shape[0] < 2:
            raise ValueError("empirical distribution needs at least two samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        self._samples = s

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def B(self) -> int:
        return self._samples.shape[0]

    def __len__(self) -> int:
        return self.B

    def __repr__(self) -> str:
        return f"EmpiricalDistribution(B={self.B})"

    def quantile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must lie in (0, 1), got {q}")
        return float(self._samples[order_index(q, self.B)])

    def order_statistic(self, q: float) -> float:
        """Like `quantile` but accepts the closed interval ``[0, 1]``."""
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"level must lie in [0, 1], got {q}")
        return float(self._samples[order_index(q, self.B)])

    def cdf(self, x):
        counts = np.searchsorted(self._samples, x, side="right")
        out = counts / self.B
        return float(out) if np.ndim(out) == 0 else out

    def std(self) -> float:
        return float(self._samples.std(ddof=1))
