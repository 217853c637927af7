"""
Independent reference computations used by the tests.

Nothing here touches prefix sums, the compiled kernel or the vectorized
bounds code: block sums are taken by slicing, distributions are enumerated
exactly, and the closed-form variance estimators are written as explicit
double loops over the d x d matrix.
"""
from __future__ import annotations

import math
from collections import Counter
from itertools import combinations_with_replacement

import numpy as np


def multiset_draws(n_choices: int, size: int):
    """
    Every multiset of `size` draws from `n_choices`, with its probability.

    Equivalent to enumerating all ``n_choices ** size`` ordered draws, grouped
    by the (order-free) statistic they produce.
    """
    total = n_choices**size
    for combo in combinations_with_replacement(range(n_choices), size):
        counts = Counter(combo).values()
        ways = math.factorial(size)
        for c in counts:
            ways //= math.factorial(c)
        yield combo, ways / total


def direct_block_mean(y: np.ndarray, starts, length: int) -> np.ndarray:
    pieces = [y[s : s + length] for s in starts]
    return np.concatenate(pieces).mean(axis=0)


def exact_outer_distribution(y: np.ndarray, ell: int, H) -> tuple[np.ndarray, np.ndarray]:
    """Exact first-level pivot atoms and probabilities by enumeration."""
    m = y.shape[0]
    n_blocks, b = m - ell + 1, m // ell
    block_means = [y[j : j + ell].mean(axis=0) for j in range(n_blocks)]
    center = np.mean(block_means, axis=0)
    h0 = H(center)
    atoms, probs = [], []
    for combo, p in multiset_draws(n_blocks, b):
        atoms.append(math.sqrt(b * ell) * (H(direct_block_mean(y, combo, ell)) - h0))
        probs.append(p)
    return np.array(atoms), np.array(probs)


def exact_inner_distribution(y: np.ndarray, outer_starts, ell: int, k: int, H):
    """Exact second-level pivot atoms and probabilities for one outer draw."""
    m = y.shape[0]
    c = m // k
    cands = [s + j for s in outer_starts for j in range(ell - k + 1)]
    for s in cands:  # windows never leave the original series
        assert 0 <= s and s + k <= m
    center = np.mean([y[s : s + k].mean(axis=0) for s in cands], axis=0)
    h0 = H(center)
    atoms, probs = [], []
    for combo, p in multiset_draws(len(cands), c):
        starts = [cands[q] for q in combo]
        atoms.append(math.sqrt(c * k) * (H(direct_block_mean(y, starts, k)) - h0))
        probs.append(p)
    return np.array(atoms), np.array(probs)


def kolmogorov_distance(samples, atoms, probs, tol: float = 1e-9) -> float:
    """
    sup_x |F_mc(x) - F_exact(x)| for a discrete exact law.

    Both CDFs are step functions, so the sup is attained just to the right of
    an atom. Atoms closer than `tol` are treated as one (rounding noise
    between summation orders).
    """
    samples = np.sort(np.asarray(samples, dtype=float))
    order = np.argsort(atoms)
    atoms, probs = np.asarray(atoms)[order], np.asarray(probs)[order]
    cum = np.cumsum(probs)
    pts = atoms + tol
    f_exact = np.array([cum[np.searchsorted(atoms, x, side="right") - 1] for x in pts])
    f_mc = np.searchsorted(samples, pts, side="right") / samples.shape[0]
    below = np.searchsorted(samples, atoms[0] - tol, side="right") / samples.shape[0]
    return float(max(np.max(np.abs(f_mc - f_exact)), below))


def direct_sigma_dh(y: np.ndarray, ell: int, symmetrize: bool = False) -> np.ndarray:
    n, d = y.shape
    z = y - y.mean(axis=0)
    S = np.zeros((d, d))
    for r in range(d):
        for s in range(d):
            acc = 0.0
            for i in range(n):
                acc += z[i, r] * z[i, s]
            for j in range(1, ell):
                for i in range(n - j):
                    acc += z[i, r] * z[i + j, s]
                    if symmetrize:
                        acc += z[i + j, r] * z[i, s]
            S[r, s] = acc / n
    return S


def direct_sigma_gk(y: np.ndarray, ell: int, c: float) -> np.ndarray:
    n, d = y.shape
    z = y - y.mean(axis=0)
    S = np.zeros((d, d))
    for j in range(ell):
        w = 1.0 if j == 0 else 2.0 * (1.0 - c * (j / ell) ** 2)
        for r in range(d):
            for s in range(d):
                acc = 0.0
                for i in range(n - ell):
                    acc += z[i, r] * z[i + j, s]
                S[r, s] += w * acc / n
    return S


def direct_sigma_gk_boot(xstar: np.ndarray, ell: int) -> np.ndarray:
    N, d = xstar.shape
    b = N // ell
    z = xstar - xstar.mean(axis=0)
    S = np.zeros((d, d))
    for j in range(b):
        block = z[j * ell : (j + 1) * ell].sum(axis=0)
        S += np.outer(block, block) / ell
    return S / b


def quadratic_tau(S: np.ndarray, grad: np.ndarray) -> float:
    return math.sqrt(float(grad @ S @ grad))


def batch_means_se(values: np.ndarray, n_batches: int = 1000) -> float:
    """Standard error of a long-run average by non-overlapping batch means."""
    batches = np.asarray(values)[: len(values) // n_batches * n_batches].reshape(n_batches, -1)
    return float(batches.mean(axis=1).std(ddof=1) / math.sqrt(n_batches))
