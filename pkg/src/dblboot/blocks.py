"""
First-level overlapping block bootstrap.

Resamples are never pasted together: a resample is a vector of ``b`` block
starts and every block sum is read off a prefix-sum table in O(d) time. Block
starts are 0-based throughout, so valid starts are ``0 .. n_blocks - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dblboot.empdist import EmpiricalDistribution
from dblboot.exceptions import DegenerateSampleError
from dblboot.smooth import SmoothEstimator

__all__ = [
    "BlockScheme",
    "ResampleDraw",
    "OuterResult",
    "make_scheme",
    "draw",
    "draw_starts",
    "resample_mean",
    "pivot",
    "materialize",
    "outer_distribution",
]


def _as_multiseries(series) -> np.ndarray:
    y = np.array(series, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise ValueError(f"expected an (m, d) array, got shape {y.shape}")
    if y.shape[0] < 2:
        raise ValueError(f"series needs at least 2 observations, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    y.setflags(write=False)
    return y


class BlockScheme:
    """
    Geometry of length-``ell`` overlapping blocks over an ``(m, d)`` series.

    Attributes
    ----------
    m, d, ell : int
    n_blocks : int
        ``m - ell + 1`` candidate blocks.
    b : int
        ``m // ell`` blocks per resample, so a resample has length ``b * ell``.
    prefix : ndarray, shape (m + 1, d)
        ``prefix[i]`` is the sum of the first ``i`` observations.
    block_sums : ndarray, shape (n_blocks, d)
    center : ndarray, shape (d,)
        Bootstrap expectation of the resample mean, i.e. the average of all
        block means. Differs from the sample mean because end points fall in
        fewer blocks.
    """

    def __init__(self, series, ell: int) -> None:
        y = _as_multiseries(series)
        m, d = y.shape
        ell = int(ell)
        if not 1 <= ell <= m:
            raise ValueError(f"block length must satisfy 1 <= ell <= {m}, got {ell}")
        self.series = y
        self.m, self.d, self.ell = m, d, ell
        self.n_blocks = m - ell + 1
        self.b = m // ell
        prefix = np.zeros((m + 1, d))
        np.cumsum(y, axis=0, out=prefix[1:])
        prefix.setflags(write=False)
        self.prefix = prefix
        self._windows: dict[int, np.ndarray] = {}
        self.block_sums = self.window_sums(ell)
        self.center = self.block_sums.mean(axis=0) / ell

    def __repr__(self) -> str:
        return f"BlockScheme(m={self.m}, d={self.d}, ell={self.ell}, b={self.b})"

    @property
    def resample_length(self) -> int:
        return self.b * self.ell

    def window_sums(self, length: int) -> np.ndarray:
        """Sums of every contiguous window of `length`, indexed by start."""
        if length not in self._windows:
            if not 1 <= length <= self.m:
                raise ValueError(f"window length {length} outside [1, {self.m}]")
            w = self.prefix[length:] - self.prefix[:-length]
            w.setflags(write=False)
            self._windows[length] = w
        return self._windows[length]

    def block_sum(self, start: int) -> np.ndarray:
        return self.prefix[start + self.ell] - self.prefix[start]


def make_scheme(series, ell: int) -> BlockScheme:
    return BlockScheme(series, ell)


@dataclass(frozen=True)
class ResampleDraw:
    """The ``b`` block starts of one first-level resample, in sampled order."""

    starts: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.starts, dtype=np.int64).ravel()
        s.setflags(write=False)
        object.__setattr__(self, "starts", s)

    def __len__(self) -> int:
        return self.starts.shape[0]

    def validate(self, scheme: BlockScheme) -> None:
        if len(self) != scheme.b:
            raise ValueError(f"draw has {len(self)} blocks, scheme needs {scheme.b}")
        if self.starts.min() < 0 or self.starts.max() >= scheme.n_blocks:
            raise ValueError("block start out of range")


def draw_starts(scheme: BlockScheme, rng: np.random.Generator, size: int) -> np.ndarray:
    """``(size, b)`` i.i.d. uniform block starts."""
    return rng.integers(0, scheme.n_blocks, size=(size, scheme.b))


def draw(scheme: BlockScheme, rng: np.random.Generator) -> ResampleDraw:
    return ResampleDraw(rng.integers(0, scheme.n_blocks, size=scheme.b))


def _starts(d) -> np.ndarray:
    return d.starts if isinstance(d, ResampleDraw) else np.asarray(d, dtype=np.int64)


def resample_mean(scheme: BlockScheme, starts) -> np.ndarray:
    """
    Mean of the pasted resample, from block sums.

    `starts` is a `ResampleDraw` or an integer array whose last axis has
    length ``b``; leading axes broadcast, giving shape ``(..., d)``.
    """
    s = _starts(starts)
    return scheme.block_sums[s].sum(axis=-2) / scheme.resample_length


def pivot(scheme: BlockScheme, starts, est: SmoothEstimator):
    """``sqrt(b ell) * (H(resample mean) - H(center))``."""
    h = est.H(resample_mean(scheme, starts))
    h0 = est.H(scheme.center)
    if not (np.all(np.isfinite(h)) and np.isfinite(h0)):
        raise DegenerateSampleError("H undefined at a resampled mean")
    t = np.sqrt(scheme.resample_length) * (h - h0)
    return float(t) if np.ndim(t) == 0 else t


def materialize(scheme: BlockScheme, starts) -> np.ndarray:
    """Paste the sampled blocks end to end: shape ``(..., b * ell, d)``."""
    s = _starts(starts)
    idx = s[..., :, None] + np.arange(scheme.ell)
    idx = idx.reshape(*s.shape[:-1], scheme.resample_length)
    return scheme.series[idx]


@dataclass(frozen=True)
class OuterResult:
    """
    Monte Carlo first-level bootstrap.

    Attributes
    ----------
    pivots : EmpiricalDistribution
        Sorted pivots; the bootstrap distribution of the centered, scaled
        statistic.
    t_star : ndarray, shape (B1,)
        The same pivots in draw order, aligned with `starts`.
    stat_raw : ndarray, shape (B1,)
        ``sqrt(b ell) * H(resample mean)``.
    tau_hat : float
        Sample standard deviation (ddof=1) of `stat_raw`.
    starts : ndarray, shape (B1, b)
    means : ndarray, shape (B1, d)
    """

    pivots: EmpiricalDistribution
    t_star: np.ndarray
    stat_raw: np.ndarray
    tau_hat: float
    starts: np.ndarray
    means: np.ndarray

    @property
    def B(self) -> int:
        return self.t_star.shape[0]

    @property
    def draws(self) -> list[ResampleDraw]:
        return [ResampleDraw(s) for s in self.starts]


def outer_distribution(
    scheme: BlockScheme, est: SmoothEstimator, B1: int, rng: np.random.Generator
) -> OuterResult:
    """Draw `B1` first-level resamples and collect their pivots."""
    if B1 < 2:
        raise ValueError(f"B1 must be at least 2, got {B1}")
    starts = draw_starts(scheme, rng, B1)
    means = resample_mean(scheme, starts)
    h = est.H(means)
    h0 = est.H(scheme.center)
    if not (np.all(np.isfinite(h)) and np.isfinite(h0)):
        raise DegenerateSampleError(
            f"{est.kind.value} undefined at {np.count_nonzero(~np.isfinite(h))} "
            "first-level resample means"
        )
    scale = np.sqrt(scheme.resample_length)
    stat_raw = scale * h
    t_star = scale * (h - h0)
    return OuterResult(
        pivots=EmpiricalDistribution(t_star),
        t_star=t_star,
        stat_raw=stat_raw,
        tau_hat=float(stat_raw.std(ddof=1)),
        starts=starts,
        means=means,
    )
