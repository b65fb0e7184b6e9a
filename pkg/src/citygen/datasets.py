"""Corpus construction: raster post-processing, patch cropping, quality
filtering, and a self-contained toy-city generator for training without any
external data.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError
from .fields import (
    Palette,
    SemanticField,
    class_fractions,
    default_palette,
    load_field_png,
    palette_map_nearest,
    save_field_png,
)
from .gridops import class_boundary_mask, dilate_chebyshev
from .validation import as_rgb_raster

log = logging.getLogger(__name__)

SIZE_TO_SCALE = {512: "S512", 256: "S256", 128: "S128"}


@dataclass(frozen=True)
class CleaningPolicy:
    """Thresholds that classify a patch as low quality.

    A patch is rejected when buildings are under-represented or water/rail
    over-represented; `extra_min`/`extra_max` add per-class bounds keyed by
    palette class name.
    """

    min_building_frac: float = 0.20
    max_water_frac: float = 0.30
    max_rail_frac: float = 0.10
    extra_min: dict = dc_field(default_factory=dict)
    extra_max: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        bounds = [self.min_building_frac, self.max_water_frac, self.max_rail_frac]
        bounds += list(self.extra_min.values()) + list(self.extra_max.values())
        if any(not (0.0 <= b <= 1.0) for b in bounds):
            raise ConfigurationError("cleaning bounds must lie in [0, 1]")


@dataclass(frozen=True)
class CropSpec:
    """Sliding-window crop sizes and strides (stride may be one int for all)."""

    sizes: tuple = (128, 256, 512)
    stride: object = None  # int, {size: int}, or None for stride == size

    def stride_for(self, size: int) -> int:
        if self.stride is None:
            return size
        if isinstance(self.stride, dict):
            stride = int(self.stride[size])
        else:
            stride = int(self.stride)
        if stride < 1:
            raise ConfigurationError(f"stride for size {size} must be >= 1")
        return stride

    def __post_init__(self):
        bad = [s for s in self.sizes if s not in SIZE_TO_SCALE]
        if bad:
            raise ConfigurationError(f"unsupported crop sizes {bad}; choose from {sorted(SIZE_TO_SCALE)}")


def postprocess_render(
    raster,
    palette: Palette,
    edge_band: int = 1,
    color_tolerance: float = 10.0,
) -> SemanticField:
    """Clean a rendered raster into a semantic field.

    Color correction snaps every pixel to its nearest palette color. Boundary
    refinement then reassigns suspect pixels (within `edge_band` Chebyshev
    distance of a class boundary and farther than `color_tolerance` from their
    snapped color) by majority vote over trusted 3x3 neighbors. Idempotent:
    a palette-exact raster passes through unchanged.
    """
    if edge_band < 0:
        raise ConfigurationError("edge_band must be >= 0")
    arr = as_rgb_raster(raster)
    if edge_band > 0 and (arr.shape[0] < 3 or arr.shape[1] < 3):
        raise DataError("boundary refinement needs a raster of at least 3 x 3 pixels")

    snapped = palette_map_nearest(arr, palette)
    grid = np.array(snapped.grid)
    colors = palette.color_array().astype(np.float64)
    dist = np.sqrt(((arr - colors[grid]) ** 2).sum(axis=2))

    band = dilate_chebyshev(class_boundary_mask(grid), edge_band)
    suspects = band & (dist > color_tolerance)
    if not suspects.any():
        return snapped

    trusted = ~suspects
    out = grid.copy()
    n_classes = len(palette)
    rows, cols = np.nonzero(suspects)
    h, w = grid.shape
    for r, c in zip(rows, cols):
        votes = np.zeros(n_classes, dtype=np.int64)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and trusted[rr, cc]:
                    votes[grid[rr, cc]] += 1
        if votes.any():
            out[r, c] = int(np.argmax(votes))  # argmax ties break to the lowest id
    return snapped.with_grid(out)


def crop_patches(field: SemanticField, spec: CropSpec) -> list:
    """Sliding-window crops of `field` at every requested size.

    Sizes larger than the field are skipped with a logged warning. Crop count
    per size is (floor((H-s)/stride)+1) * (floor((W-s)/stride)+1).
    """
    h, w = field.shape
    patches = []
    for size in sorted(spec.sizes, reverse=True):
        if size > h or size > w:
            log.warning("skipping crop size %d: field is %dx%d", size, h, w)
            continue
        stride = spec.stride_for(size)
        tag = SIZE_TO_SCALE[size]
        for r in range(0, h - size + 1, stride):
            for c in range(0, w - size + 1, stride):
                patch = field.grid[r : r + size, c : c + size]
                patches.append(
                    SemanticField(patch, field.palette, tag, field.meters_per_pixel)
                )
    return patches


_RULE_CLASSES = ("building", "water", "rail")


def clean_filter(field: SemanticField, policy: CleaningPolicy | None = None):
    """Quality gate for a training patch.

    Returns (accept, reasons); rejects when buildings < min, water > max,
    rail > max, or any extra per-class bound is violated. Decisions depend
    only on class fractions.
    """
    policy = policy or CleaningPolicy()
    palette = field.palette
    for name in _RULE_CLASSES + tuple(policy.extra_min) + tuple(policy.extra_max):
        if not palette.has_class(name):
            raise ConfigurationError(f"cleaning policy references class {name!r} absent from palette")

    fractions = class_fractions(field)

    def frac(name: str) -> float:
        return fractions.get(palette.id_of(name), 0.0)

    reasons = []
    if frac("building") < policy.min_building_frac:
        reasons.append(f"buildings < {policy.min_building_frac:.2f}")
    if frac("water") > policy.max_water_frac:
        reasons.append(f"water > {policy.max_water_frac:.2f}")
    if frac("rail") > policy.max_rail_frac:
        reasons.append(f"rail > {policy.max_rail_frac:.2f}")
    for name, lo in policy.extra_min.items():
        if frac(name) < lo:
            reasons.append(f"{name} < {lo:.2f}")
    for name, hi in policy.extra_max.items():
        if frac(name) > hi:
            reasons.append(f"{name} > {hi:.2f}")
    return len(reasons) == 0, reasons


@dataclass(frozen=True)
class ToyCityStyle:
    """Knobs for the synthetic layout generator (all lengths in pixels)."""

    road_spacing: tuple = (18, 34)
    road_width: int = 3
    building_margin: int = 2
    p_water_cell: float = 0.06
    p_park_cell: float = 0.10
    footpath_min_side: int = 12
    min_cell_side: int = 5


def make_toy_city(
    seed: int,
    side: int = 128,
    style: ToyCityStyle | None = None,
    palette: Palette | None = None,
    scale_tag: str = "S128",
) -> SemanticField:
    """Generate a deterministic synthetic city block layout.

    A full-span axis-aligned road grid with jittered spacing guarantees the
    road network is one connected component touching all four borders; street
    cells are filled with margined building blocks, parks, water ponds, and
    footpaths through larger blocks.
    """
    if side not in (64, 128, 256, 512):
        raise ConfigurationError(f"side must be one of 64/128/256/512, got {side}")
    style = style or ToyCityStyle()
    palette = palette or default_palette()
    terrain = palette.id_of("terrain")
    vegetation = palette.id_of("vegetation")
    water = palette.id_of("water")
    building = palette.id_of("building")
    road = palette.id_of("road")
    footpath = palette.id_of("footpath")

    rng = np.random.default_rng(np.random.PCG64(seed))
    grid = np.full((side, side), terrain, dtype=np.int32)

    lo, hi = style.road_spacing
    w = style.road_width

    def road_lines() -> list:
        lines, pos = [], int(rng.integers(2, max(3, lo // 2 + 1)))
        while pos + w <= side - 2:
            lines.append(pos)
            pos += w + int(rng.integers(lo, hi + 1))
        if not lines:  # tiny grids still get one full-span road per axis
            lines = [side // 2 - w // 2]
        return lines

    row_lines = road_lines()
    col_lines = road_lines()
    for r in row_lines:
        grid[r : r + w, :] = road
    for c in col_lines:
        grid[:, c : c + w] = road

    def gaps(lines: list) -> list:
        out, prev_end = [], 0
        for s, e in [(p, p + w) for p in lines]:
            if s - prev_end >= style.min_cell_side:
                out.append((prev_end, s))
            prev_end = e
        if side - prev_end >= style.min_cell_side:
            out.append((prev_end, side))
        return out

    m = style.building_margin
    for r0, r1 in gaps(row_lines):
        for c0, c1 in gaps(col_lines):
            ch, cw = r1 - r0, c1 - c0
            roll = rng.random()
            if roll < style.p_water_cell:
                # pond on a vegetated bank
                grid[r0:r1, c0:c1] = vegetation
                yy, xx = np.mgrid[r0:r1, c0:c1]
                cy, cx = (r0 + r1 - 1) / 2.0, (c0 + c1 - 1) / 2.0
                ry, rx = max(1.0, 0.38 * ch), max(1.0, 0.38 * cw)
                pond = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
                block = grid[r0:r1, c0:c1]
                block[pond] = water
            elif roll < style.p_water_cell + style.p_park_cell:
                grid[r0:r1, c0:c1] = vegetation
            else:
                br0, br1 = r0 + m, r1 - m
                bc0, bc1 = c0 + m, c1 - m
                if br1 - br0 < 2 or bc1 - bc0 < 2:
                    grid[r0:r1, c0:c1] = vegetation
                    continue
                grid[br0:br1, bc0:bc1] = building
                bh, bw = br1 - br0, bc1 - bc0
                if max(bh, bw) >= style.footpath_min_side:
                    # footpath through the block, along its longer axis
                    if bh >= bw:
                        cut = br0 + bh // 2
                        grid[cut, bc0:bc1] = footpath
                    else:
                        cut = bc0 + bw // 2
                        grid[br0:br1, cut] = footpath

    return SemanticField(grid, palette, scale_tag)


def manifest_record(
    path: str,
    field: SemanticField,
    policy: CleaningPolicy | None = None,
    source: str = "toy",
    seed: int | None = None,
) -> dict:
    accepted, reasons = clean_filter(field, policy)
    record = {
        "path": path,
        "scale_tag": field.scale_tag,
        "fractions": {str(k): v for k, v in class_fractions(field).items()},
        "accepted": accepted,
        "reasons": reasons,
        "source": source,
    }
    if seed is not None:
        record["seed"] = seed
    return record


def write_manifest(records: list, path) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def read_manifest(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def build_toy_corpus(
    out_dir,
    count: int,
    side: int = 128,
    seed: int = 0,
    palette: Palette | None = None,
    policy: CleaningPolicy | None = None,
    style: ToyCityStyle | None = None,
) -> list:
    """Write `count` toy-city patches plus a manifest.jsonl into `out_dir`."""
    palette = palette or default_palette()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(count):
        field = make_toy_city(seed + i, side=side, style=style, palette=palette)
        name = f"toy_{seed + i:06d}.png"
        save_field_png(field, out_dir / name)
        records.append(manifest_record(name, field, policy, source="toy", seed=seed + i))
    write_manifest(records, out_dir / "manifest.jsonl")
    palette.save(out_dir / "palette.json")
    return records


def build_corpus_from_rasters(
    in_dir,
    out_dir,
    palette: Palette | None = None,
    spec: CropSpec | None = None,
    policy: CleaningPolicy | None = None,
    edge_band: int = 1,
) -> list:
    """Post-process rendered rasters from `in_dir` and crop them into patches."""
    palette = palette or default_palette()
    spec = spec or CropSpec()
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    from PIL import Image

    for src in sorted(in_dir.glob("*.png")):
        raster = np.asarray(Image.open(src).convert("RGB"))
        field = postprocess_render(raster, palette, edge_band=edge_band)
        for k, patch in enumerate(crop_patches(field, spec)):
            name = f"{src.stem}_{patch.scale_tag}_{k:05d}.png"
            save_field_png(patch, out_dir / name)
            records.append(manifest_record(name, patch, policy, source=src.name))
    write_manifest(records, out_dir / "manifest.jsonl")
    palette.save(out_dir / "palette.json")
    return records


def load_corpus(corpus_dir, palette: Palette | None = None, accepted_only: bool = True) -> list:
    """Load patches listed in a corpus manifest as SemanticFields."""
    corpus_dir = Path(corpus_dir)
    manifest = corpus_dir / "manifest.jsonl"
    if not manifest.exists():
        raise ConfigurationError(f"no manifest.jsonl under {corpus_dir}")
    if palette is None:
        palette_path = corpus_dir / "palette.json"
        palette = Palette.load(palette_path) if palette_path.exists() else default_palette()
    fields = []
    for record in read_manifest(manifest):
        if accepted_only and not record["accepted"]:
            continue
        fields.append(load_field_png(corpus_dir / record["path"], palette, record["scale_tag"]))
    return fields
