"""Squared-exponential hyperparameter selection: MEAN, NML and DGS.

MEAN
    Moment heuristic. ``sigma`` is the mean of the per-axis standard
    deviations of the displacements; ``length_scale`` is the mean pairwise
    *squared* distance between source points (``sqrt=True`` takes its
    square root so the value has length units).
NML
    Minimizes the negative log marginal likelihood in log-parameter space,
    starting from the MEAN estimate.
DGS
    Exhaustive search over a 3 x 3 grid of (sigma, length_scale)
    candidates, scored by the RMSE between the warped source and the
    target image.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import Grid, SparseCorrespondence, Volume
from .gp import (
    LENGTH_FLOOR, SIGMA_FLOOR, DEFAULT_JITTER, KernelMatrixError, KernelParams,
    _lml_points, dense_field, fit,
)
from .metrics import rmse
from .warp import WarpConvention, training_data, warp_image

__all__ = [
    "LandmarkStats",
    "landmark_stats",
    "DegenerateDisplacementWarning",
    "estimate_mean",
    "NmlResult",
    "estimate_nml",
    "DgsConfig",
    "DgsCell",
    "estimate_dgs",
    "evaluate_cell",
    "dgs_candidates",
]

NML_MAX_ITER = 200
NML_GTOL = 1e-6


class DegenerateDisplacementWarning(UserWarning):
    """All displacement components are constant; sigma was floored."""


@dataclass(frozen=True)
class LandmarkStats:
    """Per-axis displacement spread and pairwise source distance statistics.

    ``sq_dist_*`` are squared distances, or plain distances if computed with
    ``sqrt=True``.
    """

    sigma_disp: np.ndarray
    sq_dist_min: float
    sq_dist_mean: float
    sq_dist_max: float

    @property
    def sigma_mean(self) -> float:
        return float(np.mean(self.sigma_disp))


def landmark_stats(corr: SparseCorrespondence, sqrt: bool = False) -> LandmarkStats:
    if corr.n < 2:
        raise ValueError("need at least 2 landmarks")
    sigma_disp = np.std(corr.displacements, axis=0)
    x = np.ascontiguousarray(corr.source_points)
    sq = _kernels.pairwise_sqdist(x, x)[np.triu_indices(corr.n, k=1)]
    if sqrt:
        lo, mean, hi = math.sqrt(sq.min()), math.sqrt(sq.mean()), math.sqrt(sq.max())
    else:
        lo, mean, hi = float(sq.min()), float(sq.mean()), float(sq.max())
    return LandmarkStats(sigma_disp, lo, mean, hi)


def _floor_sigma(s: float) -> float:
    return max(float(s), SIGMA_FLOOR)


def _floor_length(l: float) -> float:
    return max(float(l), LENGTH_FLOOR)


def estimate_mean(corr: SparseCorrespondence, sqrt: bool = False,
                  jitter: float = DEFAULT_JITTER) -> KernelParams:
    """MEAN heuristic hyperparameters.

    Emits :class:`DegenerateDisplacementWarning` when every axis has zero
    spread and sigma had to be floored.
    """
    stats = landmark_stats(corr, sqrt)
    sigma = stats.sigma_mean
    if sigma < SIGMA_FLOOR:
        warnings.warn("all displacements identical; sigma floored",
                      DegenerateDisplacementWarning, stacklevel=2)
    return KernelParams(_floor_sigma(sigma), _floor_length(stats.sq_dist_mean), jitter)


@dataclass(frozen=True)
class NmlResult:
    params: KernelParams
    nml: float
    init_nml: float
    converged: bool
    iterations: int


def _nml_objective(points, values, theta, jitter):
    try:
        p = KernelParams.from_log(theta, jitter)
        with np.errstate(all="ignore"):
            value, grad, _ = _lml_points(points, values, p)
    except KernelMatrixError:
        return math.inf, None
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        return math.inf, None
    return -value, -grad


def estimate_nml(corr: SparseCorrespondence, init: KernelParams,
                 convention: WarpConvention = WarpConvention.PULLBACK,
                 max_iter: int = NML_MAX_ITER, gtol: float = NML_GTOL) -> NmlResult:
    """Minimize the negative log marginal likelihood over (log sigma, log l).

    Gradient descent with an Armijo backtracking line search. The trial step
    is the Barzilai-Borwein step length; only descent steps are accepted,
    so the result never has a higher NML than ``init``.
    """
    if corr.n < 2:
        raise ValueError("need at least 2 landmarks")
    points, values = training_data(corr, convention)
    lo = np.array([math.log(SIGMA_FLOOR), math.log(LENGTH_FLOOR)])
    theta = init.log_params()
    f, g = _nml_objective(points, values, theta, init.jitter)
    if not math.isfinite(f):
        raise ValueError("degenerate initialization")
    f0 = f
    step = 1.0 / max(1.0, float(np.max(np.abs(g))))
    converged = False
    it = 0
    for it in range(max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            converged = True
            break
        if it == max_iter:
            break
        t = step
        accepted = False
        while t > 1e-16:
            cand = np.maximum(theta - t * g, lo)
            fc, gc = _nml_objective(points, values, cand, init.jitter)
            if fc <= f + 1e-4 * float(g @ (cand - theta)) and fc <= f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        s, y = cand - theta, gc - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 2.0 * t
        theta, f, g = cand, fc, gc
    params = init if np.array_equal(theta, init.log_params()) else KernelParams.from_log(theta, init.jitter)
    return NmlResult(params, f, f0, converged, it)


@dataclass(frozen=True)
class DgsConfig:
    """Images that score a DGS candidate. The prediction grid is the target grid."""

    source: Volume
    target: Volume
    convention: WarpConvention = WarpConvention.PULLBACK
    fill: float = 0.0

    def __post_init__(self):
        if self.source.grid != self.target.grid:
            raise ValueError("source and target grids must be identical")
        object.__setattr__(self, "convention", WarpConvention(self.convention))

    @property
    def grid(self) -> Grid:
        return self.target.grid


@dataclass(frozen=True)
class DgsCell:
    sigma: float
    length_scale: float
    rmse: float


def dgs_candidates(corr: SparseCorrespondence, sqrt: bool = False):
    """Deduplicated, ascending sigma and length-scale candidate lists."""
    stats = landmark_stats(corr, sqrt)
    sd = stats.sigma_disp
    sigmas = [_floor_sigma(v) for v in (sd.min(), stats.sigma_mean, sd.max())]
    lengths = [_floor_length(v) for v in (stats.sq_dist_min, stats.sq_dist_mean, stats.sq_dist_max)]
    return sorted(set(sigmas)), sorted(set(lengths))


def evaluate_cell(corr: SparseCorrespondence, params: KernelParams, cfg: DgsConfig,
                  chunk_size: int = 65536) -> float:
    """RMSE between the target and the source warped with a GP fit at ``params``."""
    model = fit(corr, params, cfg.convention)
    field = dense_field(model, cfg.grid, chunk_size, variance=False)
    warped = warp_image(cfg.source, field, cfg.convention, cfg.fill)
    return rmse(warped, cfg.target)


def estimate_dgs(corr: SparseCorrespondence, cfg: DgsConfig, sqrt: bool = False,
                 jitter: float = DEFAULT_JITTER):
    """Discrete grid search.

    Returns
    -------
    params : KernelParams
        Argmin of the RMSE table; ties go to the smallest length scale,
        then the smallest sigma.
    table : list of DgsCell
        Row-major over (sigma, length_scale), both ascending. Cells whose
        kernel matrix could not be factored have ``rmse = inf``.
    """
    sigmas, lengths = dgs_candidates(corr, sqrt)
    cells = [(s, l) for s in sigmas for l in lengths]

    def score(cell):
        try:
            return evaluate_cell(corr, KernelParams(cell[0], cell[1], jitter), cfg)
        except KernelMatrixError:
            return math.inf

    scores = [score(c) for c in cells]
    table = [DgsCell(s, l, r) for (s, l), r in zip(cells, scores)]
    feasible = [c for c in table if math.isfinite(c.rmse)]
    if not feasible:
        raise np.linalg.LinAlgError("no feasible hyperparameters")
    best = min(feasible, key=lambda c: (c.rmse, c.length_scale, c.sigma))
    return KernelParams(best.sigma, best.length_scale, jitter), table
