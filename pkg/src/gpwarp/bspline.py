"""Single-level cubic B-spline free-form deformation fitted to landmarks.

The control lattice extends three control points beyond the image on every
side. Coefficients minimize, independently per axis,

    sum_i |B(x_i) c - d_i|^2 + lam |c|^2

where ``B(x_i)`` holds the tensor-product cubic basis weights at landmark
``x_i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .geometry import DenseFieldResult, Grid, SparseCorrespondence, as_points
from .warp import WarpConvention, training_data

__all__ = [
    "BsplineField",
    "cubic_weights",
    "default_control_spacing",
    "control_grid_for",
    "basis_matrix",
    "fit_bspline",
    "eval_bspline",
    "eval_points",
    "MARGIN",
]

MARGIN = 3
DEFAULT_LAMBDA = 1e-6


def cubic_weights(t):
    """Uniform cubic B-spline weights for fractional coordinate ``t`` in [0, 1).

    Returns an array of shape ``t.shape + (4,)`` for control offsets
    -1, 0, +1, +2.
    """
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    t3 = t2 * t
    u = 1.0 - t
    return np.stack(
        [
            u * u * u / 6.0,
            (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
            t3 / 6.0,
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class BsplineField:
    control_grid: Grid
    coefficients: np.ndarray  # (n_control, d), x-fastest over control_grid
    regularization: float = DEFAULT_LAMBDA

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=np.float64)
        if c.shape != (self.control_grid.size, self.control_grid.ndim):
            raise ValueError("coefficient array does not match control grid")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)


def default_control_spacing(image_grid: Grid) -> np.ndarray:
    """Image extent / 8 per axis; falls back to voxel spacing for flat axes."""
    ext = image_grid.extent / 8.0
    return np.where(ext > 0, ext, np.asarray(image_grid.spacing))


def control_grid_for(image_grid: Grid, control_spacing) -> Grid:
    h = np.broadcast_to(np.asarray(control_spacing, dtype=np.float64), (image_grid.ndim,))
    if np.any(h <= 0):
        raise ValueError("control spacing must be positive")
    cells = np.ceil(image_grid.extent / h - 1e-9).astype(int)
    dims = np.maximum(cells, 0) + 1 + 2 * MARGIN
    origin = np.asarray(image_grid.origin) - MARGIN * h
    return Grid(dims, h, origin)


def _support(control_grid: Grid, points: np.ndarray):
    """Base control index (offset -1) and fractional coordinate per point/axis."""
    u = (points - np.asarray(control_grid.origin)) / np.asarray(control_grid.spacing)
    i = np.floor(u)
    t = u - i
    i = i.astype(np.int64)
    dims = np.asarray(control_grid.dims)
    ok = np.all((i >= 1) & (i + 2 <= dims - 1), axis=1)
    return i - 1, t, ok


def _stencil(control_grid: Grid, points: np.ndarray):
    """Flat control indices and weights, each of shape (n, 4**d)."""
    d = control_grid.ndim
    base, t, ok = _support(control_grid, points)
    if not np.all(ok):
        raise ValueError("grid exceeds lattice support")
    w_axis = cubic_weights(t)  # (n, d, 4)
    dims = control_grid.dims
    strides = np.cumprod((1,) + dims[:-1])
    idx, wts = [], []
    for offs in itertools.product(range(4), repeat=d):
        flat = np.zeros(len(points), dtype=np.int64)
        w = np.ones(len(points))
        for a, o in enumerate(offs):
            flat += (base[:, a] + o) * strides[a]
            w = w * w_axis[:, a, o]
        idx.append(flat)
        wts.append(w)
    return np.stack(idx, axis=1), np.stack(wts, axis=1)


def basis_matrix(control_grid: Grid, points) -> np.ndarray:
    """Dense design matrix ``B`` of shape (n_points, n_control)."""
    pts = as_points(points, control_grid.ndim)
    idx, w = _stencil(control_grid, pts)
    b = np.zeros((len(pts), control_grid.size))
    rows = np.repeat(np.arange(len(pts)), idx.shape[1])
    np.add.at(b, (rows, idx.ravel()), w.ravel())
    return b


def fit_bspline(corr: SparseCorrespondence, image_grid: Grid,
                control_spacing: Union[float, Sequence[float], None] = None,
                lam: float = DEFAULT_LAMBDA,
                convention: WarpConvention = WarpConvention.PULLBACK) -> BsplineField:
    """Regularized least-squares fit of the lattice coefficients.

    With ``lam > 0`` the smaller of the primal (n_control x n_control) and
    dual (n_landmarks x n_landmarks) systems is solved; both give the same
    minimizer. ``lam == 0`` requires a full-rank primal system.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if control_spacing is None:
        control_spacing = default_control_spacing(image_grid)
    cgrid = control_grid_for(image_grid, control_spacing)
    points, values = training_data(corr, convention)
    try:
        b = basis_matrix(cgrid, points)
    except ValueError:
        raise ValueError("landmarks lie outside the control lattice support") from None
    n, m = b.shape
    try:
        if lam > 0 and n < m:
            gram = b @ b.T
            gram[np.diag_indices(n)] += lam
            coef = b.T @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram, lower=True), values)
        else:
            normal = b.T @ b
            normal[np.diag_indices(m)] += lam
            factor = scipy.linalg.cho_factor(normal, lower=True)
            if lam == 0:
                diag = np.abs(np.diag(factor[0]))
                if diag.min() <= 1e-10 * diag.max():
                    raise np.linalg.LinAlgError
            coef = scipy.linalg.cho_solve(factor, b.T @ values)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "singular normal equations; use a positive lambda (e.g. 1e-6)"
        ) from None
    return BsplineField(cgrid, coef, lam)


def eval_points(field: BsplineField, points) -> np.ndarray:
    """Field values at arbitrary points, shape (n, d)."""
    pts = as_points(points, field.control_grid.ndim)
    idx, w = _stencil(field.control_grid, pts)
    out = np.zeros((len(pts), field.control_grid.ndim))
    for k in range(idx.shape[1]):
        out += w[:, k:k + 1] * field.coefficients[idx[:, k]]
    return out


def eval_bspline(field: BsplineField, grid: Grid) -> DenseFieldResult:
    """Dense field on ``grid``; no uncertainty is attached."""
    return DenseFieldResult(grid, eval_points(field, grid.points()), None)
