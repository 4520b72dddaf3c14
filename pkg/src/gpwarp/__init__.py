"""Gaussian-process interpolation of sparse landmark displacements into
dense deformation fields with voxel-wise uncertainty."""

import warnings

# numba probes for a TBB threading layer and warns when the system one is too old
warnings.filterwarnings("ignore", message="The TBB threading layer")

from .geometry import (
    DenseFieldResult, Grid, SparseCorrespondence, Volume,
    iterate_grid_points, voxel_to_world, world_to_voxel,
)
from .warp import WarpConvention, trilinear_sample, warp_image
from .gp import (
    GpModel, KernelMatrixError, KernelParams, build_covariance, dense_field, fit,
    log_marginal_likelihood, predict_mean, predict_variance, se_kernel,
)
from .hyperparams import DgsConfig, estimate_dgs, estimate_mean, estimate_nml
from .bspline import BsplineField, eval_bspline, fit_bspline
from .metrics import mean_abs_diff, mhd, mismatch_fraction, rmse

__version__ = "0.1.0"
