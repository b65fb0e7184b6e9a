"""Height-field synthesis per semantic class.

Natural surfaces (terrain, vegetation, water) get smooth seeded noise;
engineered surfaces (roads, footpaths, rail) sit a fixed offset above the
underlying terrain surface; building instances (4-connected components) each
get one sampled type and one Gaussian height, producing exactly flat roofs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigurationError, DataError
from .fields import Palette, SemanticField
from .noise import smooth_noise_2d
from .validation import check_finite

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class NaturalHeight:
    frequency: float
    amplitude: float
    base: float
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ConfigurationError("noise amplitude must be >= 0")
        if self.frequency <= 0:
            raise ConfigurationError("noise frequency must be > 0")


@dataclass(frozen=True)
class BuildingType:
    name: str
    mean_m: float
    std_m: float
    weight: float

    def __post_init__(self):
        if self.std_m < 0:
            raise ConfigurationError("building height std must be >= 0")
        if self.weight < 0:
            raise ConfigurationError("building type weight must be >= 0")


@dataclass(frozen=True)
class HeightConfig:
    natural: dict
    engineered: dict
    building_types: tuple
    min_building_height: float = 3.0
    building_class: str = "building"

    def __post_init__(self):
        if any(v < 0 for v in self.engineered.values()):
            raise ConfigurationError("engineered offsets must be >= 0")
        if self.building_types:
            total = sum(b.weight for b in self.building_types)
            if abs(total - 1.0) > 1e-9:
                raise ConfigurationError(f"building type weights must sum to 1, got {total}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "natural": {
                    k: {"frequency": v.frequency, "amplitude": v.amplitude, "base": v.base, "seed": v.seed}
                    for k, v in self.natural.items()
                },
                "engineered": dict(self.engineered),
                "building_types": [
                    {"name": b.name, "mean_m": b.mean_m, "std_m": b.std_m, "weight": b.weight}
                    for b in self.building_types
                ],
                "min_building_height": self.min_building_height,
                "building_class": self.building_class,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "HeightConfig":
        raw = json.loads(text)
        return cls(
            natural={k: NaturalHeight(**v) for k, v in raw.get("natural", {}).items()},
            engineered=dict(raw.get("engineered", {})),
            building_types=tuple(BuildingType(**b) for b in raw.get("building_types", [])),
            min_building_height=raw.get("min_building_height", 3.0),
            building_class=raw.get("building_class", "building"),
        )

    @classmethod
    def load(cls, path) -> "HeightConfig":
        return cls.from_json(Path(path).read_text())


def default_height_config() -> HeightConfig:
    return HeightConfig(
        natural={
            "terrain": NaturalHeight(frequency=0.03, amplitude=2.0, base=1.0, seed=11),
            "vegetation": NaturalHeight(frequency=0.05, amplitude=3.0, base=2.0, seed=23),
            "water": NaturalHeight(frequency=0.02, amplitude=0.1, base=0.4, seed=37),
            "void": NaturalHeight(frequency=0.02, amplitude=0.0, base=0.0, seed=53),
        },
        engineered={"road": 0.2, "footpath": 0.15, "rail": 0.3},
        building_types=(
            BuildingType("townhouse", 10.0, 2.0, 0.4),
            BuildingType("apartment", 30.0, 8.0, 0.4),
            BuildingType("tower", 60.0, 15.0, 0.2),
        ),
    )


@dataclass
class BuildingInstance:
    """One 4-connected building footprint, later assigned a type and height."""

    instance_id: int
    pixels: np.ndarray  # (N, 2) row/col pairs in row-major order
    type_name: str | None = None
    height_m: float | None = None


@dataclass(eq=False)
class HeightField:
    """H x W nonnegative elevations in meters, paired with a semantic field."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 2 or grid.size == 0:
            raise DataError(f"height grid must be a nonempty H x W array, got {grid.shape}")
        check_finite(grid, "height field")
        if grid.min() < 0:
            raise DataError("height field contains negative elevations")
        object.__setattr__(self, "grid", grid)

    @property
    def shape(self) -> tuple:
        return self.grid.shape

    def __eq__(self, other) -> bool:
        return isinstance(other, HeightField) and np.array_equal(self.grid, other.grid)


def class_mask(field: SemanticField, class_id: int) -> np.ndarray:
    """Indicator mask of one class: 1 where the field equals class_id."""
    if not 0 <= class_id < len(field.palette):
        raise ConfigurationError(f"class id {class_id} outside palette")
    return (field.grid == class_id).astype(np.uint8)


def building_instances(field: SemanticField, building_class: str = "building") -> list:
    """4-connected components of the building mask, ordered by their
    topmost-then-leftmost pixel. Heights are left unset.
    """
    if not field.palette.has_class(building_class):
        raise ConfigurationError(f"palette has no {building_class!r} class")
    mask = field.grid == field.palette.id_of(building_class)
    labeled, n = ndimage.label(mask, structure=FOUR_CONNECTED)
    if n == 0:
        return []
    flat = labeled.ravel()
    labels, first = np.unique(flat, return_index=True)
    order = sorted((f, l) for l, f in zip(labels, first) if l != 0)
    instances = []
    for rank, (_, label) in enumerate(order):
        pixels = np.argwhere(labeled == label)
        instances.append(BuildingInstance(instance_id=rank, pixels=pixels))
    return instances


def assign_building_heights(instances: list, cfg: HeightConfig, seed: int) -> list:
    """Sample a type and a truncated-Gaussian height per instance.

    Deterministic in (seed, instance order); heights never fall below
    cfg.min_building_height.
    """
    if not cfg.building_types:
        raise ConfigurationError("height config declares no building types")
    rng = np.random.default_rng(seed)
    weights = np.array([b.weight for b in cfg.building_types])
    out = []
    for inst in instances:
        btype = cfg.building_types[int(rng.choice(len(cfg.building_types), p=weights))]
        height = rng.normal(btype.mean_m, btype.std_m)
        for _ in range(32):  # truncate below by resampling, then clamp
            if height >= cfg.min_building_height:
                break
            height = rng.normal(btype.mean_m, btype.std_m)
        height = max(height, cfg.min_building_height)
        out.append(replace(inst, type_name=btype.name, height_m=float(height)))
    return out


def _natural_surface(shape: tuple, nc: NaturalHeight, seed: int) -> np.ndarray:
    surface = nc.base + nc.amplitude * smooth_noise_2d(shape, nc.frequency, nc.seed ^ seed)
    return np.clip(surface, 0.0, None)


def synth_class_heights(field: SemanticField, cfg: HeightConfig, seed: int) -> HeightField:
    """Heights for natural and engineered classes; building pixels stay 0.

    Engineered classes sit a fixed offset above the underlying surface
    computed as if the pixel were terrain.
    """
    palette = field.palette
    present = {palette.classes[i].name for i in np.unique(field.grid)}
    covered = set(cfg.natural) | set(cfg.engineered) | {cfg.building_class}
    missing = present - covered
    if missing:
        raise ConfigurationError(f"height config does not cover class(es) {sorted(missing)}")

    grid = np.zeros(field.shape, dtype=np.float64)
    needs_ground = [n for n in cfg.engineered if n in present]
    ground = None
    if needs_ground or "terrain" in present:
        if "terrain" not in cfg.natural:
            raise ConfigurationError("height config needs a 'terrain' natural class")
        ground = _natural_surface(field.shape, cfg.natural["terrain"], seed)

    for name, nc in cfg.natural.items():
        if name not in present:
            continue
        mask = field.grid == palette.id_of(name)
        surface = ground if name == "terrain" else _natural_surface(field.shape, nc, seed)
        grid[mask] = surface[mask]
    for name, offset in cfg.engineered.items():
        if name not in present:
            continue
        mask = field.grid == palette.id_of(name)
        grid[mask] = ground[mask] + offset
    return HeightField(grid)


def compose_height_field(field: SemanticField, cfg: HeightConfig, seed: int) -> HeightField:
    """Full height synthesis: class surfaces plus flat per-instance building
    heights anchored at the ground level under each instance centroid.
    """
    base = synth_class_heights(field, cfg, seed)
    if not field.palette.has_class(cfg.building_class):
        return base
    instances = assign_building_heights(building_instances(field, cfg.building_class), cfg, seed)
    if not instances:
        return base
    if "terrain" not in cfg.natural:
        raise ConfigurationError("height config needs a 'terrain' natural class")
    ground = _natural_surface(field.shape, cfg.natural["terrain"], seed)
    grid = np.array(base.grid)
    h, w = field.shape
    for inst in instances:
        cy = min(max(int(np.floor(inst.pixels[:, 0].mean() + 0.5)), 0), h - 1)
        cx = min(max(int(np.floor(inst.pixels[:, 1].mean() + 0.5)), 0), w - 1)
        grid[inst.pixels[:, 0], inst.pixels[:, 1]] = ground[cy, cx] + inst.height_m
    return HeightField(grid)


# -- persistence ------------------------------------------------------------

DEFAULT_METERS_PER_UNIT = 0.01


def save_height_png(hf: HeightField, path, meters_per_unit: float = DEFAULT_METERS_PER_UNIT) -> None:
    """16-bit grayscale PNG plus a JSON sidecar declaring the unit scale."""
    path = Path(path)
    quantized = np.floor(hf.grid / meters_per_unit + 0.5)
    if quantized.max() > 65535:
        raise DataError(
            f"heights up to {hf.grid.max():.1f} m exceed 16-bit range at {meters_per_unit} m/unit"
        )
    img = Image.fromarray(quantized.astype(np.uint16))
    img.save(path, format="PNG")
    sidecar = {"meters_per_unit": meters_per_unit, "shape": list(hf.shape)}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))


def load_height_png(path) -> HeightField:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    meters_per_unit = DEFAULT_METERS_PER_UNIT
    if sidecar_path.exists():
        meters_per_unit = json.loads(sidecar_path.read_text())["meters_per_unit"]
    arr = np.asarray(Image.open(path), dtype=np.float64)
    return HeightField(arr * meters_per_unit)


def save_height_npz(hf: HeightField, path) -> None:
    """Lossless float container for exact round trips."""
    np.savez(path, heights=hf.grid)


def load_height_npz(path) -> HeightField:
    with np.load(path) as data:
        return HeightField(np.array(data["heights"]))
