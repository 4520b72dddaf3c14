"""Gaussian-process interpolation of sparse displacement fields.

The displacement field is modeled as ``d`` independent zero-mean scalar
GPs (one per axis) that share a squared-exponential kernel

    k(x, x') = sigma^2 * exp(-|x - x'|^2 / (2 l^2))

and hence share one Cholesky factorization. Internally everything is
computed on the unit-scale correlation matrix ``R = K / sigma^2`` so the
posterior mean is exactly (bitwise) independent of ``sigma``; ``sigma``
only scales the posterior variance.

A jitter of ``jitter * sigma^2`` is added to the kernel diagonal. On
Cholesky failure it is escalated by factors of ten up to ``1e-2 * sigma^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from . import _kernels
from .geometry import DenseFieldResult, Grid, SparseCorrespondence, as_points
from .warp import WarpConvention, training_data

__all__ = [
    "KernelParams",
    "GpModel",
    "KernelMatrixError",
    "se_kernel",
    "build_covariance",
    "fit",
    "fit_points",
    "predict_mean",
    "predict_variance",
    "dense_field",
    "log_marginal_likelihood",
    "SIGMA_FLOOR",
    "LENGTH_FLOOR",
    "MAX_JITTER",
]

SIGMA_FLOOR = 1e-6
LENGTH_FLOOR = 1e-6
DEFAULT_JITTER = 1e-8
MAX_JITTER = 1e-2
DEFAULT_CHUNK = 65536


class KernelMatrixError(np.linalg.LinAlgError):
    """Raised when K + jitter stays indefinite after jitter escalation."""

    def __init__(self, jitter: float):
        super().__init__(f"kernel matrix not positive definite (final jitter {jitter:.3g})")
        self.jitter = jitter


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential hyperparameters.

    ``jitter`` is relative to ``sigma**2``.
    """

    sigma: float
    length_scale: float
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        for name in ("sigma", "length_scale", "jitter"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.sigma < SIGMA_FLOOR:
            raise ValueError(f"sigma must be >= {SIGMA_FLOOR}")
        if self.length_scale < LENGTH_FLOOR:
            raise ValueError(f"length_scale must be >= {LENGTH_FLOOR}")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")

    @property
    def neg_half_inv_l2(self) -> float:
        return -0.5 / (self.length_scale * self.length_scale)

    def log_params(self) -> np.ndarray:
        return np.array([math.log(self.sigma), math.log(self.length_scale)])

    @classmethod
    def from_log(cls, theta, jitter: float = DEFAULT_JITTER) -> "KernelParams":
        return cls(
            max(math.exp(theta[0]), SIGMA_FLOOR),
            max(math.exp(theta[1]), LENGTH_FLOOR),
            jitter,
        )


def se_kernel(p, q, params: KernelParams) -> float:
    """Squared-exponential covariance between two points."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    s = 0.0
    for a, b in zip(p, q):
        t = a - b
        s += t * t
    return params.sigma ** 2 * math.exp(s * params.neg_half_inv_l2)


def _unit_covariance(rows: np.ndarray, cols: np.ndarray, params: KernelParams):
    sq = _kernels.pairwise_sqdist(rows, cols)
    return _kernels.unit_kernel(sq, params.neg_half_inv_l2), sq


def build_covariance(rows, cols, params: KernelParams) -> np.ndarray:
    """Kernel matrix ``M[i, j] = k(rows[i], cols[j])``."""
    rows = as_points(rows)
    cols = as_points(cols, rows.shape[1])
    r, _ = _unit_covariance(rows, cols, params)
    return params.sigma ** 2 * r


def _jitter_schedule(start: float):
    yield start
    j = DEFAULT_JITTER if start < DEFAULT_JITTER else start * 10.0
    while j <= MAX_JITTER * (1 + 1e-9):
        yield j
        j *= 10.0


def _factor(r: np.ndarray, jitter: float) -> Tuple[np.ndarray, float]:
    """Cholesky of ``r + jitter * I`` with escalation."""
    last = jitter
    eye = np.eye(len(r))
    for j in _jitter_schedule(jitter):
        last = j
        try:
            lower = scipy.linalg.cholesky(r + j * eye, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(lower)) and np.all(np.diag(lower) > 0):
            return lower, j
    raise KernelMatrixError(last)


@dataclass(frozen=True)
class GpModel:
    """Trained GP state.

    Attributes
    ----------
    params : KernelParams
    train_points : (n, d) array
        Anchor locations of the training displacements.
    values : (n, d) array
        Training displacements.
    chol_unit : (n, n) array
        Lower Cholesky factor of ``R + jitter_used * I`` with ``R = K / sigma^2``.
    alpha_unit : (n, d) array
        ``(R + jitter_used * I)^-1 values``.
    jitter_used : float
        Relative jitter after escalation.
    """

    params: KernelParams
    train_points: np.ndarray
    values: np.ndarray
    chol_unit: np.ndarray
    alpha_unit: np.ndarray
    jitter_used: float

    @property
    def chol_factor(self) -> np.ndarray:
        """Lower factor L with ``L L^T = K + jitter * sigma^2 * I``."""
        return self.params.sigma * self.chol_unit

    @property
    def alpha(self) -> np.ndarray:
        """``(K + jitter * sigma^2 * I)^-1 D`` as an (n, d) array, one column per axis."""
        return self.alpha_unit / self.params.sigma ** 2

    @property
    def ndim(self) -> int:
        return self.train_points.shape[1]


def fit_points(points, values, params: KernelParams) -> GpModel:
    """Condition the GP on displacement ``values`` observed at ``points``."""
    x = as_points(points)
    y = as_points(values, x.shape[1])
    if len(y) != len(x):
        raise ValueError("points and values differ in length")
    r, _ = _unit_covariance(x, x, params)
    lower, jitter = _factor(r, params.jitter)
    alpha = scipy.linalg.cho_solve((lower, True), y, check_finite=False)
    for arr in (x, y, lower, alpha):
        arr.flags.writeable = False
    return GpModel(params, x, y, lower, alpha, jitter)


def fit(corr: SparseCorrespondence, params: KernelParams,
        convention: WarpConvention = WarpConvention.PULLBACK) -> GpModel:
    """Train on a correspondence set.

    The anchors and displacement sign follow ``convention``; see
    :func:`gpwarp.warp.training_data`.
    """
    points, values = training_data(corr, convention)
    return fit_points(points, values, params)


def _predict(model: GpModel, queries: np.ndarray, want_mean: bool, want_var: bool):
    q = np.ascontiguousarray(queries, dtype=np.float64)
    n, d = len(q), model.ndim
    mean = np.empty((n if want_mean else 0, d))
    var = np.empty(n if want_var else 0)
    if n:
        _kernels.predict_rows(
            q, model.train_points, model.params.neg_half_inv_l2, model.alpha_unit,
            np.ascontiguousarray(model.chol_unit.T), want_mean, want_var, mean, var,
        )
    if want_var:
        var = model.params.sigma ** 2 * np.clip(var, 0.0, 1.0)
    return mean, var


def predict_mean(model: GpModel, queries) -> np.ndarray:
    """Posterior mean displacement ``K_*^T K^-1 D`` at each query, shape (n, d)."""
    q = as_points(queries, model.ndim)
    return _predict(model, q, True, False)[0]


def predict_variance(model: GpModel, queries) -> np.ndarray:
    """Posterior variance (diagonal of the posterior covariance), clamped to [0, sigma^2].

    The value is shared by all displacement axes.
    """
    q = as_points(queries, model.ndim)
    return _predict(model, q, False, True)[1]


def dense_field(model: GpModel, grid: Grid, chunk_size: int = DEFAULT_CHUNK,
                variance: bool = True) -> DenseFieldResult:
    """Evaluate mean (and optionally variance) at every voxel center of ``grid``."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    if grid.ndim != model.ndim:
        raise ValueError("grid dimensionality does not match model")
    pts = grid.points()
    n = len(pts)
    field = np.empty((n, grid.ndim))
    unc = np.empty(n) if variance else None
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        m, v = _predict(model, pts[start:stop], True, variance)
        field[start:stop] = m
        if variance:
            unc[start:stop] = v
    return DenseFieldResult(grid, field, unc)


def _lml_points(points: np.ndarray, values: np.ndarray, params: KernelParams):
    n, d = values.shape
    r, sq = _unit_covariance(points, points, params)
    lower, jitter = _factor(r, params.jitter)
    s2 = params.sigma ** 2
    cho = (lower, True)
    a_unit = scipy.linalg.cho_solve(cho, values, check_finite=False)
    alpha = a_unit / s2
    quad = float(np.sum(values * alpha))
    logdet = n * math.log(s2) + 2.0 * float(np.sum(np.log(np.diag(lower))))
    value = -0.5 * quad - 0.5 * d * logdet - 0.5 * d * n * math.log(2 * math.pi)

    kinv = scipy.linalg.cho_solve(cho, np.eye(n), check_finite=False) / s2
    w = alpha @ alpha.T - d * kinv
    # dK/dlog(sigma) = 2 K~, so 0.5 * tr(W dK) collapses to quad - d n
    g_sigma = quad - d * n
    dk_dlogl = s2 * r * sq / params.length_scale ** 2
    g_length = 0.5 * float(np.sum(w * dk_dlogl))
    return value, np.array([g_sigma, g_length]), jitter


def log_marginal_likelihood(corr: SparseCorrespondence, params: KernelParams,
                            convention: WarpConvention = WarpConvention.PULLBACK):
    """Log marginal likelihood summed over axes and its gradient.

    Returns
    -------
    value : float
    gradient : (2,) array
        Derivatives with respect to ``(log sigma, log length_scale)``.
    """
    points, values = training_data(corr, convention)
    value, grad, _ = _lml_points(points, values, params)
    return value, grad
