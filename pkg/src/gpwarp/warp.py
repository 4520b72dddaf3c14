"""Backward warping of volumes with (bi/tri)linear sampling."""

from __future__ import annotations

import enum

import numpy as np

from .geometry import DenseFieldResult, SparseCorrespondence, Volume, as_points

__all__ = ["WarpConvention", "training_data", "trilinear_sample", "sample_index", "warp_image"]


class WarpConvention(enum.Enum):
    """Which space anchors the dense field and how it is applied.

    PULLBACK
        Field anchored at matched points ``x~_i`` with values ``d_i``;
        ``out(y) = source(y - v(y))``.
    PUSHFORWARD
        Field anchored at source points ``x_i`` with values ``-d_i``;
        ``out(y) = source(y + v(y))``.
    """

    PULLBACK = "pullback"
    PUSHFORWARD = "pushforward"

    @property
    def sign(self) -> float:
        return -1.0 if self is WarpConvention.PULLBACK else 1.0


def training_data(corr: SparseCorrespondence, convention: WarpConvention = WarpConvention.PULLBACK):
    """Anchor points and displacement values an interpolator should be trained on."""
    convention = WarpConvention(convention)
    if convention is WarpConvention.PULLBACK:
        return np.array(corr.matched_points), np.array(corr.displacements)
    return np.array(corr.source_points), -np.array(corr.displacements)


def sample_index(vol: Volume, idx: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Multilinear interpolation at continuous voxel indices ``idx`` (n, d).

    Positions outside ``[0, dims - 1]`` on any axis get ``fill``.
    """
    idx = np.asarray(idx, dtype=np.float64)
    n, d = idx.shape
    dims = np.array(vol.grid.dims)
    data = vol.samples
    inside = np.all((idx >= 0) & (idx <= dims - 1), axis=1)

    strides = np.cumprod(np.concatenate([[1], dims[:-1]]))
    base = np.zeros(n, dtype=np.int64)
    frac = np.zeros((n, d))
    upper_ok = dims > 1
    for a in range(d):
        if upper_ok[a]:
            i0 = np.clip(np.floor(idx[:, a]), 0, dims[a] - 2).astype(np.int64)
            frac[:, a] = idx[:, a] - i0
        else:
            i0 = np.zeros(n, dtype=np.int64)
        base += i0 * strides[a]
    base = np.where(inside, base, 0)

    out = np.zeros(n)
    for corner in range(1 << d):
        w = np.ones(n)
        off = np.zeros(n, dtype=np.int64)
        skip = False
        for a in range(d):
            bit = (corner >> a) & 1
            if bit:
                if not upper_ok[a]:
                    skip = True
                    break
                w = w * frac[:, a]
                off += strides[a]
            elif upper_ok[a]:
                w = w * (1.0 - frac[:, a])
        if skip:
            continue
        out += w * data[np.where(inside, base + off, 0)]
    return np.where(inside, out, fill)


def trilinear_sample(vol: Volume, p, fill: float = 0.0):
    """Linearly interpolated value of ``vol`` at world point(s) ``p``.

    A single point returns a float; an (n, d) array returns an array.
    """
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts = as_points(pts, vol.grid.ndim)
    idx = (pts - np.asarray(vol.grid.origin)) / np.asarray(vol.grid.spacing)
    out = sample_index(vol, idx, fill)
    return float(out[0]) if single else out


def warp_image(source: Volume, field: DenseFieldResult,
               convention: WarpConvention = WarpConvention.PULLBACK,
               fill: float = 0.0) -> Volume:
    """Resample ``source`` through a dense displacement field.

    The output lives on ``field.grid``. When the source shares that grid
    the lookup is done in index space (``i -/+ v / spacing``), which keeps
    zero fields and whole-voxel shifts exact.
    """
    convention = WarpConvention(convention)
    grid = field.grid
    if source.grid.ndim != grid.ndim:
        raise ValueError("grid mismatch: source and field dimensionality differ")
    sign = convention.sign
    if source.grid == grid:
        idx = grid.indices() + sign * (field.field / np.asarray(grid.spacing))
    else:
        world = grid.points() + sign * field.field
        idx = (world - np.asarray(source.grid.origin)) / np.asarray(source.grid.spacing)
    return Volume(grid, sample_index(source, idx, fill))
