"""Semantic layout data model: palettes, class-id fields, one-hot codings, masks.

A layout block is a pair (semantic field, height field). The semantic field is
an H x W grid of small-integer class ids bound to a palette; the diffusion
models consume it as a one-hot map with one channel per class. Masks use the
single convention 1 = known/preserved, 0 = repaint target.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, DataError
from .validation import as_class_grid, as_rgb_raster, check_finite

SCALE_TAGS = ("S512", "S256", "S128")

# 2 px per meter ground sampling of the source rasters
DEFAULT_METERS_PER_PIXEL = 0.5

STORAGE = "storage"
DIFFUSION = "diffusion"


@dataclass(frozen=True)
class PaletteClass:
    id: int
    name: str
    color: tuple[int, int, int]


@dataclass(frozen=True)
class Palette:
    """Ordered registry of semantic classes with display colors.

    Class ids must be exactly 0..C-1 and colors pairwise distinct so that
    nearest-color mapping is unambiguous.
    """

    classes: tuple[PaletteClass, ...]

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ConfigurationError("a palette needs at least 2 classes")
        ids = [c.id for c in self.classes]
        if ids != list(range(len(ids))):
            raise ConfigurationError(f"class ids must be exactly 0..{len(ids) - 1}, got {ids}")
        colors = [tuple(c.color) for c in self.classes]
        if len(set(colors)) != len(colors):
            raise ConfigurationError("palette colors must be pairwise distinct")
        for c in self.classes:
            if len(c.color) != 3 or any(not (0 <= v <= 255) for v in c.color):
                raise ConfigurationError(f"bad color {c.color!r} for class {c.id}")

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def color_array(self) -> np.ndarray:
        """(C, 3) uint8 array of class colors, row index == class id."""
        return np.array([c.color for c in self.classes], dtype=np.uint8)

    def id_of(self, name: str) -> int:
        for c in self.classes:
            if c.name == name:
                return c.id
        raise ConfigurationError(f"palette has no class named {name!r}")

    def has_class(self, name: str) -> bool:
        return any(c.name == name for c in self.classes)

    def to_json(self) -> str:
        return json.dumps(
            [{"id": c.id, "name": c.name, "color": list(c.color)} for c in self.classes],
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "Palette":
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"palette JSON is invalid: {exc}") from exc
        records = sorted(records, key=lambda r: r["id"])
        return cls(
            tuple(
                PaletteClass(int(r["id"]), str(r["name"]), tuple(int(v) for v in r["color"]))
                for r in records
            )
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Palette":
        return cls.from_json(Path(path).read_text())


def default_palette() -> Palette:
    """Eight-class default covering the classes the pipeline reasons about."""
    return Palette(
        (
            PaletteClass(0, "terrain", (222, 205, 160)),
            PaletteClass(1, "vegetation", (76, 154, 66)),
            PaletteClass(2, "water", (58, 116, 192)),
            PaletteClass(3, "building", (172, 78, 56)),
            PaletteClass(4, "road", (70, 70, 70)),
            PaletteClass(5, "footpath", (238, 222, 110)),
            PaletteClass(6, "rail", (130, 88, 166)),
            PaletteClass(7, "void", (0, 0, 0)),
        )
    )


@dataclass(eq=False)
class SemanticField:
    """H x W grid of class ids bound to a palette, at a declared crop scale."""

    grid: np.ndarray
    palette: Palette
    scale_tag: str = "S128"
    meters_per_pixel: float = DEFAULT_METERS_PER_PIXEL

    def __post_init__(self):
        if self.palette is None:
            raise ConfigurationError("semantic field requires a palette")
        grid = as_class_grid(self.grid, n_classes=len(self.palette))
        if self.scale_tag not in SCALE_TAGS:
            raise ConfigurationError(f"scale_tag must be one of {SCALE_TAGS}, got {self.scale_tag!r}")
        if not self.meters_per_pixel > 0:
            raise ConfigurationError("meters_per_pixel must be positive")
        grid = grid.copy() if grid is self.grid else grid
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SemanticField)
            and self.grid.shape == other.grid.shape
            and np.array_equal(self.grid, other.grid)
            and self.palette == other.palette
            and self.scale_tag == other.scale_tag
            and self.meters_per_pixel == other.meters_per_pixel
        )

    def with_grid(self, grid: np.ndarray) -> "SemanticField":
        return SemanticField(grid, self.palette, self.scale_tag, self.meters_per_pixel)


@dataclass(eq=False)
class OneHotField:
    """H x W x C one-hot map in either storage {0,1} or diffusion {-1,+1} coding."""

    values: np.ndarray
    coding: str
    palette: Palette

    def __post_init__(self):
        if self.coding not in (STORAGE, DIFFUSION):
            raise ConfigurationError(f"unknown one-hot coding {self.coding!r}")
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 3 or values.shape[2] != len(self.palette):
            raise DataError(
                f"one-hot values must be H x W x {len(self.palette)}, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def encode_one_hot(field: SemanticField, coding: str = STORAGE) -> OneHotField:
    """Encode a class-id grid as a one-hot map.

    Storage coding puts 1 at the class channel and 0 elsewhere; diffusion
    coding is the affine recoding 2*storage - 1, i.e. {-1, +1}.
    """
    if field.palette is None:
        raise ConfigurationError("cannot one-hot encode a field without a palette")
    c = len(field.palette)
    values = np.eye(c, dtype=np.float32)[field.grid]
    if coding == DIFFUSION:
        values = 2.0 * values - 1.0
    elif coding != STORAGE:
        raise ConfigurationError(f"unknown one-hot coding {coding!r}")
    return OneHotField(values, coding, field.palette)


def decode_argmax(
    onehot: OneHotField,
    scale_tag: str = "S128",
    meters_per_pixel: float = DEFAULT_METERS_PER_PIXEL,
) -> SemanticField:
    """Decode channel values to class ids by per-pixel argmax.

    Ties break to the lowest class id, so decoding is deterministic for any
    real-valued input (e.g. raw denoiser output).
    """
    check_finite(onehot.values, "one-hot values")
    grid = np.argmax(onehot.values, axis=2).astype(np.int32)
    return SemanticField(grid, onehot.palette, scale_tag, meters_per_pixel)


def palette_map_nearest(
    raster,
    palette: Palette,
    scale_tag: str = "S128",
    meters_per_pixel: float = DEFAULT_METERS_PER_PIXEL,
) -> SemanticField:
    """Assign each RGB pixel the class with the nearest palette color.

    Distance is Euclidean in RGB; ties break to the lowest class id.
    """
    if palette is None or len(palette) == 0:
        raise ConfigurationError("palette_map_nearest requires a nonempty palette")
    arr = as_rgb_raster(raster)
    colors = palette.color_array().astype(np.float64)  # (C, 3)
    # (H, W, C) squared distances; argmin picks the lowest id on ties
    d2 = ((arr[:, :, None, :] - colors[None, None, :, :]) ** 2).sum(axis=3)
    grid = np.argmin(d2, axis=2).astype(np.int32)
    return SemanticField(grid, palette, scale_tag, meters_per_pixel)


def class_fractions(field: SemanticField) -> dict[int, float]:
    """Fraction of pixels per class id present in the field; sums to 1."""
    ids, counts = np.unique(field.grid, return_counts=True)
    total = field.grid.size
    return {int(i): float(n) / total for i, n in zip(ids, counts)}


def field_to_rgb(field: SemanticField) -> np.ndarray:
    """Render a field to an H x W x 3 uint8 raster using its palette colors."""
    return field.palette.color_array()[field.grid]


def save_field_png(field: SemanticField, path) -> None:
    """Write an 8-bit indexed-color PNG whose palette indices are the class ids."""
    if len(field.palette) > 256:
        raise ConfigurationError("indexed PNG supports at most 256 classes")
    img = Image.fromarray(field.grid.astype(np.uint8), mode="P")
    lut = np.zeros((256, 3), dtype=np.uint8)
    lut[: len(field.palette)] = field.palette.color_array()
    img.putpalette(lut.flatten().tolist())
    img.save(path if hasattr(path, "write") else Path(path), format="PNG")


def load_field_png(
    path,
    palette: Palette,
    scale_tag: str = "S128",
    meters_per_pixel: float = DEFAULT_METERS_PER_PIXEL,
) -> SemanticField:
    """Read an indexed-color PNG written by :func:`save_field_png`."""
    img = Image.open(path if hasattr(path, "read") else Path(path))
    if img.mode != "P":
        raise DataError(f"{path}: expected an indexed-color (mode P) PNG, got mode {img.mode}")
    grid = np.asarray(img, dtype=np.int32)
    return SemanticField(grid, palette, scale_tag, meters_per_pixel)
