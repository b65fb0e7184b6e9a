"""Explicit 3D layout: lift every column to its height with a uniform class
label, and export as lossless run-length JSON or a culled box mesh.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .fields import Palette, SemanticField
from .heights import HeightField


@dataclass(eq=False)
class VoxelLayout:
    """Columnar voxel grid: per column a class id and a contiguous stack of
    `levels` voxels from the ground up (zero-height columns keep one ground
    voxel so the surface stays closed).
    """

    class_grid: np.ndarray
    levels: np.ndarray
    voxel_size_m: float
    palette: Palette

    def __post_init__(self):
        class_grid = np.asarray(self.class_grid, dtype=np.int32)
        levels = np.asarray(self.levels, dtype=np.int64)
        if class_grid.shape != levels.shape or class_grid.ndim != 2:
            raise DataError("class grid and level grid must share one H x W shape")
        if (levels < 1).any():
            raise DataError("every column must hold at least one voxel")
        if self.voxel_size_m <= 0:
            raise ConfigurationError("voxel size must be positive")
        object.__setattr__(self, "class_grid", class_grid)
        object.__setattr__(self, "levels", levels)

    @property
    def dims(self) -> tuple:
        h, w = self.class_grid.shape
        return (h, w, int(self.levels.max()))

    @property
    def total_voxels(self) -> int:
        return int(self.levels.sum())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VoxelLayout)
            and np.array_equal(self.class_grid, other.class_grid)
            and np.array_equal(self.levels, other.levels)
            and self.voxel_size_m == other.voxel_size_m
            and self.palette == other.palette
        )


def lift_to_voxels(field: SemanticField, heights: HeightField, voxel_size_m: float = 1.0) -> VoxelLayout:
    """Columns get max(1, round(height/voxel_size)) voxels of the column's
    class; ties round half up; zero heights keep a single ground voxel.
    """
    if field.shape != heights.shape:
        raise DataError(f"field shape {field.shape} != heights shape {heights.shape}")
    if voxel_size_m <= 0:
        raise ConfigurationError("voxel size must be positive")
    rounded = np.floor(heights.grid / voxel_size_m + 0.5).astype(np.int64)
    levels = np.where(heights.grid > 0, np.maximum(rounded, 1), 1)
    return VoxelLayout(field.grid, levels, voxel_size_m, field.palette)


def export_voxels(layout: VoxelLayout, format: str = "runlength_json") -> bytes:
    if format == "runlength_json":
        return _export_runlength(layout)
    if format == "mesh_obj":
        return _export_mesh(layout)
    raise ConfigurationError(f"unsupported export format {format!r}")


def _export_runlength(layout: VoxelLayout) -> bytes:
    h, w = layout.class_grid.shape
    payload = {
        "format": "runlength_json",
        "version": 1,
        "shape": [h, w],
        "voxel_size_m": layout.voxel_size_m,
        "palette": [
            {"id": c.id, "name": c.name, "color": list(c.color)} for c in layout.palette.classes
        ],
        "columns": [
            [int(c), int(n)]
            for c, n in zip(layout.class_grid.ravel().tolist(), layout.levels.ravel().tolist())
        ],
    }
    return json.dumps(payload).encode()


def import_voxels(data: bytes) -> VoxelLayout:
    payload = json.loads(data.decode())
    if payload.get("format") != "runlength_json":
        raise ConfigurationError("not a runlength_json voxel payload")
    h, w = payload["shape"]
    columns = np.asarray(payload["columns"], dtype=np.int64).reshape(h, w, 2)
    palette = Palette.from_json(json.dumps(payload["palette"]))
    return VoxelLayout(columns[:, :, 0], columns[:, :, 1], payload["voxel_size_m"], palette)


def _export_mesh(layout: VoxelLayout) -> bytes:
    """OBJ mesh of per-column boxes with shared internal walls culled.

    Vertices carry palette colors (x y z r g b); walls are emitted only above
    the neighboring column's top, so abutting columns share no hidden faces.
    """
    h, w = layout.class_grid.shape
    tops = layout.levels
    vs = layout.voxel_size_m
    colors = layout.palette.color_array().astype(np.float64) / 255.0

    vertices: list = []
    vertex_index: dict = {}
    faces: list = []

    def vert(x, y, z, color) -> int:
        key = (x, y, z, color)
        idx = vertex_index.get(key)
        if idx is None:
            idx = len(vertices) + 1  # OBJ indices are 1-based
            vertex_index[key] = idx
            vertices.append(key)
        return idx

    def quad(p0, p1, p2, p3, color):
        i0, i1, i2, i3 = (vert(*p, color) for p in (p0, p1, p2, p3))
        faces.append((i0, i1, i2))
        faces.append((i0, i2, i3))

    def neighbor_top(r, c) -> int:
        if 0 <= r < h and 0 <= c < w:
            return int(tops[r, c])
        return 0

    for r in range(h):
        for c in range(w):
            top = int(tops[r, c])
            color = tuple(np.round(colors[layout.class_grid[r, c]], 4))
            x0, x1 = c * vs, (c + 1) * vs
            y0, y1 = r * vs, (r + 1) * vs
            z = top * vs
            # top (up) and bottom (down) caps
            quad((x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z), color)
            quad((x0, y0, 0.0), (x0, y1, 0.0), (x1, y1, 0.0), (x1, y0, 0.0), color)
            # exposed wall strips above each neighbor's top
            for (nr, nc), (ax0, ay0, ax1, ay1) in (
                ((r - 1, c), (x0, y0, x1, y0)),
                ((r + 1, c), (x1, y1, x0, y1)),
                ((r, c - 1), (x0, y1, x0, y0)),
                ((r, c + 1), (x1, y0, x1, y1)),
            ):
                lo = neighbor_top(nr, nc)
                if lo >= top:
                    continue
                z0, z1 = lo * vs, top * vs
                quad(
                    (ax0, ay0, z0),
                    (ax1, ay1, z0),
                    (ax1, ay1, z1),
                    (ax0, ay0, z1),
                    color,
                )

    lines = ["# citygen voxel layout mesh"]
    for x, y, z, color in vertices:
        r_, g_, b_ = color
        lines.append(f"v {x:g} {y:g} {z:g} {r_:g} {g_:g} {b_:g}")
    for i0, i1, i2 in faces:
        lines.append(f"f {i0} {i1} {i2}")
    return ("\n".join(lines) + "\n").encode()
