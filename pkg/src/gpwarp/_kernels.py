"""Compiled inner loops for kernel evaluation and GP prediction.

Every query row is evaluated with a fixed, sequential operation order that
does not depend on how many rows are in the batch or how rows are split
over threads. This is what makes dense fields bitwise independent of the
chunk size and thread count.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _sq(a, b, i, j):
    s = 0.0
    for c in range(a.shape[1]):
        t = a[i, c] - b[j, c]
        s += t * t
    return s


@njit(cache=True, parallel=True)
def pairwise_sqdist(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in prange(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = _sq(a, b, i, j)
    return out


@njit(cache=True, parallel=True)
def unit_kernel(sqdist, neg_half_inv_l2):
    """exp(-r^2 / (2 l^2)) elementwise; the output scale is applied by callers."""
    out = np.empty_like(sqdist)
    for i in prange(sqdist.shape[0]):
        for j in range(sqdist.shape[1]):
            out[i, j] = np.exp(sqdist[i, j] * neg_half_inv_l2)
    return out


@njit(cache=True, parallel=True)
def predict_rows(queries, train, neg_half_inv_l2, alpha, upper, want_mean, want_var,
                 mean_out, var_out):
    """Posterior mean and unit-scale variance for each query row.

    ``alpha`` holds (R + jitter I)^-1 D for the unit-scale correlation
    matrix R, and ``upper`` is the transpose of its Cholesky factor. The
    returned variance is 1 - k^T (R + jitter I)^-1 k, unclamped.
    """
    m = train.shape[0]
    dd = alpha.shape[1]
    for i in prange(queries.shape[0]):
        k = np.empty(m)
        for j in range(m):
            k[j] = np.exp(_sq(queries, train, i, j) * neg_half_inv_l2)
        if want_mean:
            for a in range(dd):
                s = 0.0
                for j in range(m):
                    s += k[j] * alpha[j, a]
                mean_out[i, a] = s
        if want_var:
            # forward substitution L v = k, column oriented
            for c in range(m):
                vc = k[c] / upper[c, c]
                k[c] = vc
                for r in range(c + 1, m):
                    k[r] -= upper[c, r] * vc
            s = 0.0
            for j in range(m):
                s += k[j] * k[j]
            var_out[i] = 1.0 - s
