"""Seeded synthetic phantoms, deformations and landmark sampling.

All randomness comes from ``numpy.random.Generator(numpy.random.Philox(seed))``
(Philox-4x64-10, counter based), so results are reproducible across
platforms for a given numpy version.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import DenseFieldResult, Grid, SparseCorrespondence, Volume, as_points
from .warp import WarpConvention, warp_image

__all__ = [
    "rng",
    "make_phantom",
    "BumpDeformation",
    "make_bump_deformation",
    "sample_landmarks",
    "subsample",
    "SyntheticCase",
    "make_case",
]


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def make_phantom(grid: Grid, kind: str = "binary_blob", seed: int = 0) -> Volume:
    """Test image on ``grid``.

    ``binary_blob`` is the union of three random ellipsoids (255 inside,
    0 outside); ``gradient_ramp`` is ``x + 2y + 3z`` in world mm.
    """
    pts = grid.points()
    if kind == "gradient_ramp":
        coef = np.array([1.0, 2.0, 3.0])[: grid.ndim]
        return Volume(grid, pts @ coef)
    if kind != "binary_blob":
        raise ValueError(f"unknown phantom kind {kind!r}")
    g = rng(seed)
    lo = np.asarray(grid.origin)
    ext = np.maximum(grid.extent, np.asarray(grid.spacing))
    inside = np.zeros(len(pts), dtype=bool)
    for _ in range(3):
        center = lo + ext * g.uniform(0.3, 0.7, grid.ndim)
        semi = ext * g.uniform(0.12, 0.3, grid.ndim)
        inside |= np.sum(((pts - center) / semi) ** 2, axis=1) <= 1.0
    return Volume(grid, np.where(inside, 255.0, 0.0))


@dataclass(frozen=True)
class BumpDeformation:
    """Gaussian bump displacement ``v(x) = amplitude * exp(-|x - c|^2 / (2 r^2))``.

    A point ``x`` of the source maps to ``x + v(x)`` in the target.
    """

    center: np.ndarray
    amplitude: np.ndarray
    radius: float

    def __call__(self, points) -> np.ndarray:
        p = as_points(points, len(self.center))
        sq = np.sum((p - self.center) ** 2, axis=1)
        return np.exp(-sq / (2.0 * self.radius ** 2))[:, None] * self.amplitude

    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.amplitude)) / self.radius * np.exp(-0.5)

    def pullback(self, points, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
        """Displacement ``u(y)`` with ``y - u(y) = x`` where ``x + v(x) = y``.

        Solved by fixed-point iteration ``x <- y - v(x)``, which converges
        because the bump is a contraction (see :meth:`lipschitz`).
        """
        if self.lipschitz() >= 1.0:
            raise ValueError("bump is not invertible: |amplitude| / radius too large")
        y = as_points(points, len(self.center))
        x = y - self(y)
        for _ in range(max_iter):
            nxt = y - self(x)
            done = np.max(np.abs(nxt - x)) <= tol
            x = nxt
            if done:
                break
        return y - x

    def dense(self, grid: Grid, pullback: bool = False) -> DenseFieldResult:
        pts = grid.points()
        return DenseFieldResult(grid, self.pullback(pts) if pullback else self(pts))


def make_bump_deformation(grid: Grid, center, amplitude, radius: float) -> BumpDeformation:
    if not radius > 0:
        raise ValueError("radius must be positive")
    c = np.asarray(center, dtype=np.float64)
    a = np.asarray(amplitude, dtype=np.float64)
    if c.shape != (grid.ndim,) or a.shape != (grid.ndim,):
        raise ValueError("center and amplitude must match grid dimensionality")
    return BumpDeformation(c, a, float(radius))


def sample_landmarks(fieldh: BumpDeformation, grid: Grid, n: int, seed: int) -> SparseCorrespondence:
    """``n`` distinct voxel centers ``x_i`` with ``x~_i = x_i + v(x_i)``."""
    if n < 1 or n > grid.size:
        raise ValueError("n must be between 1 and the voxel count")
    idx = np.sort(rng(seed).choice(grid.size, size=n, replace=False))
    x = grid.points()[idx]
    return SparseCorrespondence.from_displacements(x, fieldh(x))


def subsample(corr: SparseCorrespondence, fraction: float, seed: int) -> SparseCorrespondence:
    """Random subset of ``round(fraction * N_s)`` landmarks (half-to-even, at least 1)."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    k = max(1, round(fraction * corr.n))
    idx = np.sort(rng(seed).choice(corr.n, size=k, replace=False))
    return corr.take(idx)


@dataclass(frozen=True)
class SyntheticCase:
    source: Volume
    target: Volume
    deformation: BumpDeformation
    landmarks: SparseCorrespondence
    all_landmarks: SparseCorrespondence


def make_case(seed: int = 42, size: int = 64, n_features: int = 1000,
              fraction: float = 0.2, spacing: float = 1.0,
              amplitude_mm: float = 5.0, radius_fraction: float = 0.25,
              ndim: int = 3) -> SyntheticCase:
    """End-to-end synthetic registration case.

    A binary blob phantom is deformed by a Gaussian bump centered in the
    volume with a random direction. The target is the phantom warped with
    the exact analytic pullback field, so it does not depend on any
    interpolator. ``n_features`` landmarks are drawn and ``fraction`` of
    them kept.
    """
    grid = Grid((size,) * ndim, (spacing,) * ndim)
    g = rng(seed)
    phantom_seed, lm_seed, sub_seed = (int(s) for s in g.integers(0, 2**63 - 1, 3))
    direction = g.normal(size=ndim)
    direction /= np.linalg.norm(direction)
    ext = grid.extent
    center = np.asarray(grid.origin) + ext * g.uniform(0.4, 0.6, ndim)
    radius = radius_fraction * float(np.min(ext))
    bump = make_bump_deformation(grid, center, amplitude_mm * direction, radius)
    source = make_phantom(grid, "binary_blob", phantom_seed)
    target = warp_image(source, bump.dense(grid, pullback=True), WarpConvention.PULLBACK)
    everything = sample_landmarks(bump, grid, n_features, lm_seed)
    return SyntheticCase(source, target, bump, subsample(everything, fraction, sub_seed), everything)
