"""
Second-level block bootstrap inside first-level blocks.

Given one first-level draw with starts ``N_1..N_b``, the inner candidates are
the length-``k`` windows ``N_i + j`` for ``j = 0 .. ell - k``. Each is a
contiguous window of the original series lying inside its parent block, so an
inner block can never straddle a joint between pasted first-level blocks. All
inner sums are therefore read from the original series' prefix table.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dblboot._kernels import nested_block_sums
from dblboot.blocks import BlockScheme, ResampleDraw
from dblboot.empdist import EmpiricalDistribution
from dblboot.exceptions import DegenerateSampleError, StudentizationError
from dblboot.smooth import SmoothEstimator

__all__ = [
    "EPS_TAU",
    "NestedScheme",
    "InnerResult",
    "InnerBatch",
    "make_nested",
    "inner_distribution",
    "inner_batch",
    "u_value",
]

EPS_TAU = 1e-12
_CHUNK = 32


def _check_k(outer: BlockScheme, k: int) -> int:
    k = int(k)
    if not 1 <= k <= outer.ell:
        raise ValueError(f"inner block length must satisfy 1 <= k <= {outer.ell}, got {k}")
    return k


class NestedScheme:
    """
    Inner block geometry for one first-level draw.

    Attributes
    ----------
    k : int
    ell_prime : int
        ``ell - k + 1`` inner candidates per outer block.
    c : int
        ``m // k`` inner blocks per inner resample (``m`` is the original
        series length, not ``b * ell``).
    candidate_starts : ndarray, shape (b * ell_prime,)
        Start of each candidate window in the original series, grouped by
        parent block.
    inner_center : ndarray, shape (d,)
        Average of the candidate window means.
    """

    def __init__(self, outer: BlockScheme, outer_draw, k: int) -> None:
        starts = outer_draw.starts if isinstance(outer_draw, ResampleDraw) else outer_draw
        starts = np.asarray(starts, dtype=np.int64).ravel()
        ResampleDraw(starts).validate(outer)
        self.outer = outer
        self.outer_starts = starts
        self.k = _check_k(outer, k)
        self.ell_prime = outer.ell - self.k + 1
        self.c = outer.m // self.k
        self.candidate_starts = (starts[:, None] + np.arange(self.ell_prime)).ravel()
        self.window_sums = outer.window_sums(self.k)
        self.inner_center = self.window_sums[self.candidate_starts].mean(axis=0) / self.k

    @property
    def parents(self) -> np.ndarray:
        """Index of the parent outer block of every candidate."""
        return np.repeat(np.arange(self.outer_starts.shape[0]), self.ell_prime)

    @property
    def resample_length(self) -> int:
        return self.c * self.k


def make_nested(outer: BlockScheme, outer_draw, k: int) -> NestedScheme:
    return NestedScheme(outer, outer_draw, k)


@dataclass(frozen=True)
class InnerResult:
    pivots: EmpiricalDistribution
    tau_star: float


@dataclass(frozen=True)
class InnerBatch:
    """
    Inner bootstraps for a batch of outer draws, row ``m`` belonging to draw ``m``.

    Attributes
    ----------
    pivots : ndarray, shape (M, B2)
        Unsorted inner pivots.
    tau_star : ndarray, shape (M,)
        Standard deviation (ddof=1) of ``sqrt(c k) * H(inner mean)`` per row.
    centers : ndarray, shape (M, d)
    """

    pivots: np.ndarray
    tau_star: np.ndarray
    centers: np.ndarray

    def u_values(self, t_star) -> np.ndarray:
        """Inner CDF of each row evaluated at the matching outer pivot."""
        t = np.asarray(t_star, dtype=np.float64)
        return np.count_nonzero(self.pivots <= t[:, None], axis=1) / self.pivots.shape[1]

    def result(self, m: int) -> InnerResult:
        return InnerResult(EmpiricalDistribution(self.pivots[m]), float(self.tau_star[m]))


def inner_batch(
    outer: BlockScheme,
    outer_starts,
    k: int,
    est: SmoothEstimator,
    B2: int,
    rng: np.random.Generator,
) -> InnerBatch:
    """
    Run `B2` inner resamples for every row of `outer_starts`.

    Random indices are consumed row by row, so the result equals calling
    `inner_distribution` on each outer draw in turn with the same generator.
    """
    if B2 < 2:
        raise ValueError(f"B2 must be at least 2, got {B2}")
    k = _check_k(outer, k)
    starts = np.ascontiguousarray(outer_starts, dtype=np.int64)
    if starts.ndim == 1:
        starts = starts[None, :]
    M, b = starts.shape
    ell_prime = outer.ell - k + 1
    c = outer.m // k
    windows = np.ascontiguousarray(outer.window_sums(k))

    sums = np.empty((M, B2, outer.d))
    for lo in range(0, M, _CHUNK):
        hi = min(lo + _CHUNK, M)
        idx = rng.integers(0, b * ell_prime, size=(hi - lo, B2, c))
        sums[lo:hi] = nested_block_sums(windows, starts[lo:hi], idx, ell_prime)

    cand = starts[:, :, None] + np.arange(ell_prime)
    centers = windows[cand.reshape(M, -1)].mean(axis=1) / k
    h = est.H(sums / (c * k))
    h0 = est.H(centers)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(h0))):
        raise DegenerateSampleError(f"{est.kind.value} undefined at an inner resample mean")
    scale = np.sqrt(c * k)
    pivots = scale * (h - h0[:, None])
    tau_star = (scale * h).std(axis=1, ddof=1)
    return InnerBatch(pivots=pivots, tau_star=tau_star, centers=centers)


def inner_distribution(
    nested: NestedScheme, est: SmoothEstimator, B2: int, rng: np.random.Generator
) -> InnerResult:
    """Second-level pivot distribution for one outer draw."""
    batch = inner_batch(nested.outer, nested.outer_starts, nested.k, est, B2, rng)
    tau = float(batch.tau_star[0])
    if not tau > EPS_TAU:
        raise StudentizationError(f"degenerate inner distribution (tau* = {tau:.3g})")
    return InnerResult(EmpiricalDistribution(batch.pivots[0]), tau)


def u_value(inner: InnerResult, t_star: float) -> float:
    return inner.pivots.cdf(t_star)
