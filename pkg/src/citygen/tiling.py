"""Auto-regressive canvas orchestration: grow a seed block into an
arbitrarily large semantic field by sliding overlapping outpaint jobs.

The canvas is a class-id grid plus a painted bitmap owned by a single
executor; every pixel is painted by exactly the first job that covers it and
is immutable afterwards (later jobs see it as known context).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigurationError
from .fields import SemanticField
from .painting import PaintGenerator, PaintTask, paint_sample
from .validation import as_mask


@dataclass(frozen=True)
class TileJob:
    """One block-sized paint job: where it sits, what it already knows."""

    origin: tuple
    side: int
    known_mask: np.ndarray  # 1 where the canvas is already painted under this tile
    seed: int

    @property
    def rows(self) -> slice:
        return slice(self.origin[0], self.origin[0] + self.side)

    @property
    def cols(self) -> slice:
        return slice(self.origin[1], self.origin[1] + self.side)


@dataclass(frozen=True)
class CanvasPlan:
    canvas_size: tuple
    block_side: int
    overlap: float
    jobs: tuple

    def to_json(self) -> str:
        return json.dumps(
            {
                "canvas_size": list(self.canvas_size),
                "block_side": self.block_side,
                "overlap": self.overlap,
                "jobs": [
                    {
                        "origin": list(j.origin),
                        "side": j.side,
                        "seed": j.seed,
                        "known_ratio": float(np.mean(j.known_mask)),
                    }
                    for j in self.jobs
                ],
            },
            indent=2,
        )


def _axis_origins(extent: int, block: int, step: int) -> list:
    origins = list(range(0, extent - block + 1, step))
    if origins[-1] != extent - block:
        origins.append(extent - block)
    return origins


def plan_canvas(
    canvas_size: tuple,
    block_side: int,
    overlap: float,
    seed: int = 0,
    prepainted: np.ndarray | None = None,
) -> CanvasPlan:
    """Raster-scan schedule of block-sized tiles covering the canvas.

    Tile origins advance by round(block_side * (1 - overlap)), clamped so the
    last tiles abut the canvas edges. The first job is unconditional; every
    later job overlaps previously painted pixels. With `prepainted` given
    (e.g. a user seed block), fully-known tiles are dropped and the rest
    become conditional jobs.
    """
    h, w = canvas_size
    if not 0.0 < overlap < 1.0:
        raise ConfigurationError(f"overlap must be in (0, 1), got {overlap}")
    if block_side > h or block_side > w:
        raise ConfigurationError(f"block side {block_side} exceeds canvas {canvas_size}")
    step = int(round(block_side * (1.0 - overlap)))
    if step == 0:
        raise ConfigurationError("overlap too large: tile step rounds to 0")
    # keep neighboring tiles overlapping so later jobs always have known anchors
    step = min(step, block_side - 1) if (h > block_side or w > block_side) else step

    painted = np.zeros(canvas_size, dtype=bool)
    if prepainted is not None:
        painted |= as_mask(prepainted, canvas_size).astype(bool)
    seeds = np.random.SeedSequence(seed).generate_state(
        len(_axis_origins(h, block_side, step)) * len(_axis_origins(w, block_side, step))
    )
    jobs = []
    k = 0
    for r in _axis_origins(h, block_side, step):
        for c in _axis_origins(w, block_side, step):
            window = painted[r : r + block_side, c : c + block_side]
            if not window.all():
                jobs.append(
                    TileJob((r, c), block_side, window.astype(np.uint8), int(seeds[k]))
                )
                painted[r : r + block_side, c : c + block_side] = True
            k += 1
    if not painted.all():
        raise ConfigurationError("plan does not cover the canvas")  # unreachable by construction
    return CanvasPlan((h, w), block_side, overlap, tuple(jobs))


def execute_plan(
    plan: CanvasPlan,
    block_model,
    paint_model: PaintGenerator,
    canvas_init: SemanticField | None = None,
    prepainted: np.ndarray | None = None,
) -> SemanticField:
    """Run a plan: the first (unconditional) job samples a fresh block, later
    jobs outpaint with their known context. Deterministic given plan seeds.
    """
    if block_model is not None and paint_model is not None:
        if block_model.scale_tag != paint_model.scale_tag_:
            raise ConfigurationError(
                f"block model scale {block_model.scale_tag} != paint model scale {paint_model.scale_tag_}"
            )
    palette = paint_model.palette_ if paint_model is not None else block_model.palette_
    scale_tag = paint_model.scale_tag_ if paint_model is not None else block_model.scale_tag

    h, w = plan.canvas_size
    canvas = np.zeros((h, w), dtype=np.int32)
    painted = np.zeros((h, w), dtype=bool)
    if prepainted is not None:
        prepainted = as_mask(prepainted, (h, w)).astype(bool)
        if canvas_init is None or canvas_init.shape != (h, w):
            raise ConfigurationError("prepainted pixels need canvas-sized canvas_init content")
        canvas[prepainted] = canvas_init.grid[prepainted]
        painted |= prepainted

    for job in plan.jobs:
        known = job.known_mask.astype(bool)
        if not np.array_equal(painted[job.rows, job.cols], known):
            raise ConfigurationError("plan/known-mask inconsistent with executed canvas state")
        if not known.any():
            if block_model is None:
                raise ConfigurationError("plan has an unconditional job but no block model")
            tile = block_model.sample(1, seed=job.seed, side=job.side)[0].grid
        else:
            window = SemanticField(
                canvas[job.rows, job.cols], palette, scale_tag
            )
            task = PaintTask(window, job.known_mask, "outpaint", scale_tag, seed=job.seed)
            tile = paint_sample(task, paint_model).grid
        fresh = ~known
        target = canvas[job.rows, job.cols]
        target[fresh] = tile[fresh]
        painted[job.rows, job.cols] = True

    return SemanticField(canvas, palette, scale_tag)


def expand_from(
    seed_field: SemanticField,
    target_size: tuple,
    overlap: float,
    paint_model: PaintGenerator,
    seed: int = 0,
    anchor: tuple = (0, 0),
) -> SemanticField:
    """Grow a seed block into a target-size field; the seed region is
    preserved exactly at `anchor` (top-left by default).
    """
    h, w = target_size
    sh, sw = seed_field.shape
    if sh != sw:
        raise ConfigurationError("seed field must be square (one block)")
    if h < sh or w < sw:
        raise ConfigurationError(f"target {target_size} smaller than seed {seed_field.shape}")
    if (h, w) == (sh, sw):
        return seed_field

    prepainted = np.zeros((h, w), dtype=np.uint8)
    r0, c0 = anchor
    prepainted[r0 : r0 + sh, c0 : c0 + sw] = 1
    canvas_init = np.zeros((h, w), dtype=np.int32)
    canvas_init[r0 : r0 + sh, c0 : c0 + sw] = seed_field.grid
    init_field = SemanticField(canvas_init, seed_field.palette, paint_model.scale_tag_)

    plan = plan_canvas((h, w), sh, overlap, seed=seed, prepainted=prepainted)
    return execute_plan(plan, None, paint_model, canvas_init=init_field, prepainted=prepainted)
