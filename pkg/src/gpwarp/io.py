"""Readers and writers for volumes, dense fields, landmarks, point sets and
PGM slices. The byte-level layout is documented in docs/FORMATS.md.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import DenseFieldResult, Grid, SparseCorrespondence, Volume, as_points

__all__ = [
    "FormatError",
    "write_volume",
    "read_volume",
    "write_field",
    "read_field",
    "write_landmarks",
    "read_landmarks",
    "write_points",
    "read_points",
    "write_slice_pgm",
    "extract_slice",
    "fmt",
]

AXES = "xyz"


class FormatError(ValueError):
    """Malformed or inconsistent file contents."""


def fmt(x: float) -> str:
    """17-significant-digit decimal, enough to round-trip any float64."""
    return format(float(x), ".17g")


def _raw_path(path: Path) -> Path:
    return path.with_suffix(".raw")


def _write_pair(path, grid: Grid, data: np.ndarray, extra: dict) -> None:
    path = Path(path)
    raw = _raw_path(path)
    header = {
        "dims": list(grid.dims),
        "spacing": list(grid.spacing),
        "origin": list(grid.origin),
        "dtype": "f32",
        **extra,
        "data": raw.name,
    }
    raw.write_bytes(np.ascontiguousarray(data, dtype="<f4").tobytes())
    path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")


def _read_pair(path):
    path = Path(path)
    try:
        header = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed header {path}: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("malformed header: expected a JSON object")
    for key in ("dims", "spacing", "origin", "dtype", "data"):
        if key not in header:
            raise FormatError(f"malformed header: missing {key!r}")
    if header["dtype"] != "f32":
        raise FormatError(f"unsupported dtype {header['dtype']!r}")
    try:
        grid = Grid(header["dims"], header["spacing"], header["origin"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"malformed header: {exc}") from None
    raw = path.parent / header["data"]
    try:
        data = np.frombuffer(raw.read_bytes(), dtype="<f4")
    except OSError:
        raise FormatError(f"missing raw file {raw}") from None
    return header, grid, data.astype(np.float64)


def write_volume(vol: Volume, path) -> None:
    """Write ``<name>.vjson`` plus ``<name>.raw`` (little-endian f32, x-fastest)."""
    _write_pair(path, vol.grid, vol.samples, {})


def read_volume(path) -> Volume:
    header, grid, data = _read_pair(path)
    if header.get("components", 1) != 1:
        raise FormatError("file holds a vector field, not a volume")
    if data.size != grid.size:
        raise FormatError(f"raw size mismatch: {data.size} values for {grid.size} voxels")
    try:
        return Volume(grid, data)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def write_field(result: DenseFieldResult, path) -> None:
    """Interleaved ``[v_x, v_y, (v_z), (variance)]`` per voxel."""
    d = result.grid.ndim
    data = result.field
    if result.uncertainty is not None:
        data = np.column_stack([data, result.uncertainty])
    _write_pair(path, result.grid, data, {"components": d + (result.uncertainty is not None)})


def read_field(path) -> DenseFieldResult:
    header, grid, data = _read_pair(path)
    d = grid.ndim
    comps = header.get("components")
    if comps not in (d, d + 1):
        raise FormatError(f"components must be {d} or {d + 1}, got {comps!r}")
    if data.size != grid.size * comps:
        raise FormatError(f"raw size mismatch: {data.size} values for {grid.size}x{comps}")
    data = data.reshape(grid.size, comps)
    unc = data[:, d] if comps == d + 1 else None
    try:
        return DenseFieldResult(grid, data[:, :d], unc)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def _point_header(d: int, suffix: str = "") -> list:
    return [a + suffix for a in AXES[:d]]


def write_landmarks(corr: SparseCorrespondence, path) -> None:
    """CSV ``x,y,z,xt,yt,zt``: source then matched point per row."""
    d = corr.ndim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_point_header(d) + _point_header(d, "t"))
        for p, q in zip(corr.source_points, corr.matched_points):
            w.writerow([fmt(v) for v in p] + [fmt(v) for v in q])


def _read_rows(path, expected_headers: Sequence[list]):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError("unexpected header: file is empty")
    header = [h.strip() for h in rows[0]]
    if header not in expected_headers:
        raise FormatError(f"unexpected header {','.join(header)!r}")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise FormatError(f"line {lineno}: non-finite value")
        values.append(vals)
    if not values:
        raise FormatError("no data rows")
    return len(header), np.array(values)


def read_landmarks(path) -> SparseCorrespondence:
    """Displacements are recomputed as matched - source."""
    headers = [_point_header(d) + _point_header(d, "t") for d in (3, 2)]
    width, vals = _read_rows(path, headers)
    d = width // 2
    return SparseCorrespondence(vals[:, :d], vals[:, d:])


def write_points(points, path) -> None:
    pts = as_points(points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_point_header(pts.shape[1]))
        for p in pts:
            w.writerow([fmt(v) for v in p])


def read_points(path) -> np.ndarray:
    _, vals = _read_rows(path, [_point_header(3), _point_header(2)])
    return vals


def extract_slice(vol: Volume, axis: int, index: int) -> np.ndarray:
    """2-D slice (rows, cols) perpendicular to ``axis``.

    For a 3-D volume: axis 2 (z) gives rows=y, cols=x; axis 1 (y) gives
    rows=z, cols=x; axis 0 (x) gives rows=z, cols=y. A 2-D volume is
    returned whole (rows=y, cols=x) and only accepts axis 2, index 0.
    """
    grid = vol.grid
    arr = vol.as_array()
    if grid.ndim == 2:
        if axis != 2 or index != 0:
            raise IndexError("slice index out of range")
        return arr
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    if not 0 <= index < grid.dims[axis]:
        raise IndexError("slice index out of range")
    # array axes are (z, y, x)
    return np.take(arr, index, axis=2 - axis)


def write_slice_pgm(vol: Volume, axis: int, index: int, path, window) -> None:
    """Binary 8-bit PGM (P5) of one slice, linearly windowed to [lo, hi].

    ``pixel = clamp(floor((v - lo) / (hi - lo) * 255 + 0.5), 0, 255)``.
    """
    lo, hi = (float(w) for w in window)
    if not hi > lo:
        raise ValueError("window must satisfy hi > lo")
    img = extract_slice(vol, axis, index)
    scaled = np.floor((img - lo) / (hi - lo) * 255.0 + 0.5)
    pix = np.clip(scaled, 0, 255).astype(np.uint8)
    rows, cols = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
