"""Domain types shared across the package: grids, volumes, correspondences
and dense displacement fields.

Conventions
-----------
* Coordinates are world millimeters.
* Points are stored as ``(n, d)`` float64 arrays with ``d`` in {2, 3}.
* Voxel data is linearized x-fastest, i.e. the linear index of voxel
  ``(i, j, k)`` is ``i + nx * (j + ny * k)``. A C-ordered numpy array of
  shape ``dims[::-1]`` has exactly this memory layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "Grid",
    "Volume",
    "SparseCorrespondence",
    "DenseFieldResult",
    "voxel_to_world",
    "world_to_voxel",
    "iterate_grid_points",
    "as_points",
]

CORRESPONDENCE_TOL = 1e-9
UNCERTAINTY_EPS = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def as_points(points, d: Optional[int] = None) -> np.ndarray:
    """Coerce ``points`` to a finite ``(n, d)`` float64 array."""
    arr = np.array(points, dtype=np.float64, ndmin=2)
    if arr.ndim != 2:
        raise ValueError("points must be a 2-D array of shape (n, d)")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"expected {d}-dimensional points, got {arr.shape[1]}")
    if arr.shape[1] not in (2, 3):
        raise ValueError("points must be 2-D or 3-D")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return arr


@dataclass(frozen=True)
class Grid:
    """Axis-aligned voxel lattice.

    Parameters
    ----------
    dims : sequence of int
        Voxel count per axis, x first.
    spacing : sequence of float
        Voxel size per axis in mm.
    origin : sequence of float
        World position of voxel index 0.
    """

    dims: tuple
    spacing: tuple
    origin: tuple

    def __init__(self, dims, spacing=None, origin=None):
        dims = tuple(int(n) for n in dims)
        d = len(dims)
        if d not in (2, 3):
            raise ValueError("grid must be 2-D or 3-D")
        spacing = (1.0,) * d if spacing is None else tuple(float(s) for s in spacing)
        origin = (0.0,) * d if origin is None else tuple(float(o) for o in origin)
        if len(spacing) != d or len(origin) != d:
            raise ValueError("dims, spacing and origin must have equal length")
        if any(n < 1 for n in dims):
            raise ValueError("grid dims must be >= 1")
        if any(not (s > 0 and np.isfinite(s)) for s in spacing):
            raise ValueError("grid spacing must be positive")
        if not all(np.isfinite(origin)):
            raise ValueError("grid origin must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    @property
    def shape(self) -> tuple:
        """Shape of the C-ordered array view (slowest axis first)."""
        return self.dims[::-1]

    @property
    def extent(self) -> np.ndarray:
        """Distance between the first and last voxel centers per axis."""
        return (np.array(self.dims) - 1) * np.array(self.spacing)

    def indices(self) -> np.ndarray:
        """All voxel indices as an ``(N, d)`` int array in x-fastest order."""
        axes = [np.arange(n) for n in self.dims]
        mesh = np.meshgrid(*axes[::-1], indexing="ij")
        return np.stack([m.ravel() for m in mesh[::-1]], axis=1)

    def points(self) -> np.ndarray:
        """World coordinates of all voxel centers, x-fastest."""
        return np.asarray(self.origin) + self.indices() * np.asarray(self.spacing)

    def linear_index(self, index) -> int:
        idx = tuple(int(i) for i in index)
        lin, stride = 0, 1
        for i, n in zip(idx, self.dims):
            lin += i * stride
            stride *= n
        return lin


def voxel_to_world(grid: Grid, index) -> np.ndarray:
    """World position of the voxel center at integer ``index``."""
    index = tuple(index)
    if len(index) != grid.ndim:
        raise ValueError("index dimensionality does not match grid")
    for i, n in zip(index, grid.dims):
        if not 0 <= i < n:
            raise IndexError("index out of grid")
    return np.asarray(grid.origin) + np.asarray(index, dtype=np.float64) * np.asarray(grid.spacing)


def world_to_voxel(grid: Grid, point) -> tuple:
    """Nearest voxel index to ``point`` (may lie outside the grid)."""
    p = np.asarray(point, dtype=np.float64)
    idx = np.rint((p - np.asarray(grid.origin)) / np.asarray(grid.spacing))
    return tuple(int(i) for i in idx)


def iterate_grid_points(grid: Grid) -> Iterator[np.ndarray]:
    """Yield every voxel center in x-fastest order."""
    yield from grid.points()


@dataclass(frozen=True)
class Volume:
    """Scalar image on a :class:`Grid`; ``samples`` is flat, x-fastest."""

    grid: Grid
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64).ravel()
        if s.size != self.grid.size:
            raise ValueError(
                f"volume has {s.size} samples but grid has {self.grid.size} voxels"
            )
        if not np.all(np.isfinite(s)):
            raise ValueError("volume samples must be finite")
        object.__setattr__(self, "samples", _readonly(s))

    @classmethod
    def from_array(cls, grid: Grid, array) -> "Volume":
        """Build from an array shaped ``grid.shape`` (z, y, x)."""
        a = np.asarray(array, dtype=np.float64)
        if a.shape != grid.shape:
            raise ValueError(f"array shape {a.shape} != grid shape {grid.shape}")
        return cls(grid, a.ravel())

    def as_array(self) -> np.ndarray:
        return self.samples.reshape(self.grid.shape)


@dataclass(frozen=True)
class SparseCorrespondence:
    """Matched landmark pairs.

    ``displacements[i] == matched_points[i] - source_points[i]`` must hold
    to within 1e-9 mm per component. ``target_points`` are carried along
    for provenance and never used in computation.
    """

    source_points: np.ndarray
    matched_points: np.ndarray
    displacements: np.ndarray = None
    target_points: Optional[np.ndarray] = None

    def __post_init__(self):
        src = as_points(self.source_points)
        d = src.shape[1]
        matched = as_points(self.matched_points, d)
        if len(src) < 1 or len(src) != len(matched):
            raise ValueError("source and matched points must have equal length >= 1")
        if self.displacements is None:
            disp = matched - src
        else:
            disp = as_points(self.displacements, d)
            if len(disp) != len(src):
                raise ValueError("displacements length differs from point count")
            if np.max(np.abs(disp - (matched - src))) > CORRESPONDENCE_TOL:
                raise ValueError("displacements inconsistent with matched - source points")
        object.__setattr__(self, "source_points", _readonly(src))
        object.__setattr__(self, "matched_points", _readonly(matched))
        object.__setattr__(self, "displacements", _readonly(disp))
        if self.target_points is not None:
            object.__setattr__(self, "target_points", _readonly(as_points(self.target_points, d)))

    @classmethod
    def from_displacements(cls, source_points, displacements) -> "SparseCorrespondence":
        src = as_points(source_points)
        disp = as_points(displacements, src.shape[1])
        return cls(src, src + disp, disp)

    @property
    def n(self) -> int:
        return len(self.source_points)

    @property
    def ndim(self) -> int:
        return self.source_points.shape[1]

    def take(self, idx: Sequence[int]) -> "SparseCorrespondence":
        idx = np.asarray(idx, dtype=np.intp)
        return SparseCorrespondence(
            self.source_points[idx],
            self.matched_points[idx],
            self.displacements[idx],
            self.target_points,
        )


@dataclass(frozen=True)
class DenseFieldResult:
    """Displacement vector per voxel plus optional posterior variance map.

    Variances down to ``-1e-9`` are accepted and clamped to zero.
    """

    grid: Grid
    field: np.ndarray
    uncertainty: Optional[np.ndarray] = None

    def __post_init__(self):
        f = np.array(self.field, dtype=np.float64)
        if f.shape != (self.grid.size, self.grid.ndim):
            raise ValueError(
                f"field shape {f.shape} != ({self.grid.size}, {self.grid.ndim})"
            )
        object.__setattr__(self, "field", _readonly(f))
        if self.uncertainty is not None:
            u = np.array(self.uncertainty, dtype=np.float64).ravel()
            if u.size != self.grid.size:
                raise ValueError("uncertainty length differs from voxel count")
            if np.any(u < -UNCERTAINTY_EPS) or not np.all(np.isfinite(u)):
                raise ValueError("uncertainty must be finite and non-negative")
            object.__setattr__(self, "uncertainty", _readonly(np.maximum(u, 0.0)))

    def component(self, axis: int) -> Volume:
        return Volume(self.grid, self.field[:, axis])

    def uncertainty_volume(self) -> Volume:
        if self.uncertainty is None:
            raise ValueError("field carries no uncertainty map")
        return Volume(self.grid, self.uncertainty)
