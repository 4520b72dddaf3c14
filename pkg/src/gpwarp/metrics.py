"""Image and point-set comparison metrics."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Volume, as_points

__all__ = ["rmse", "mismatch_fraction", "mean_abs_diff", "mhd", "directed_mean_distance"]


def _check(a: Volume, b: Volume):
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    return a.samples, b.samples


def _fmean(x) -> float:
    # order-independent correctly rounded sum
    return math.fsum(x) / len(x)


def rmse(a: Volume, b: Volume) -> float:
    """Root mean squared intensity difference."""
    x, y = _check(a, b)
    diff = x - y
    return math.sqrt(_fmean((diff * diff).tolist()))


def mismatch_fraction(warp: Volume, target: Volume, tol: float = 0.5) -> float:
    """Fraction of voxels where the two volumes differ by more than ``tol``.

    The default tolerance suits 0/255 binarized images.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    x, y = _check(warp, target)
    return int(np.count_nonzero(np.abs(x - y) > tol)) / x.size


def mean_abs_diff(warp: Volume, target: Volume) -> float:
    """Average absolute per-voxel intensity difference."""
    x, y = _check(warp, target)
    return _fmean(np.abs(x - y).tolist())


def directed_mean_distance(a, b) -> float:
    """Mean over ``a`` of the Euclidean distance to the nearest point of ``b``."""
    a = as_points(a)
    b = as_points(b, a.shape[1])
    nearest = np.empty(len(a))
    for i, p in enumerate(a):
        diff = b - p
        nearest[i] = np.sqrt(np.min(np.sum(diff * diff, axis=1)))
    return _fmean(nearest.tolist())


def mhd(a, b) -> float:
    """Modified Hausdorff distance (Dubuisson & Jain, 1994).

    ``max(mean_a min_b |p - q|, mean_b min_a |p - q|)``, computed by brute
    force.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty point set")
    return max(directed_mean_distance(a, b), directed_mean_distance(b, a))
