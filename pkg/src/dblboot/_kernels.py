"""Compiled inner loops for second-level resampling."""
import numpy as np
from numba import njit


@njit(cache=True)
def nested_block_sums(window_sums, outer_starts, inner_idx, ell_prime):
    """
    Sum the inner blocks selected by `inner_idx` for every outer draw.

    window_sums : (n_k, d) sums of every length-k window of the original series
    outer_starts : (M, b) first-level block starts
    inner_idx : (M, B2, c) indices into the b * ell_prime candidate blocks of
        each outer draw; index q is window ``outer_starts[m, q // ell_prime]
        + q % ell_prime``
    """
    M, B2, c = inner_idx.shape
    d = window_sums.shape[1]
    out = np.zeros((M, B2, d))
    for m in range(M):
        for r in range(B2):
            for t in range(c):
                q = inner_idx[m, r, t]
                s = outer_starts[m, q // ell_prime] + q % ell_prime
                for j in range(d):
                    out[m, r, j] += window_sums[s, j]
    return out
