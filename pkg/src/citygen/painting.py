"""Mask construction and blended-diffusion conditional sampling.

Inpainting (boundary refinement, user sketches) and outpainting (canvas
expansion) share one mask convention: 1 = known/preserved, 0 = repaint. At
every denoising step the known region is overwritten with freshly noised
known content, and the denoiser is conditioned on Concat(mask, mask*x_t, x_t)
along channels; a final blend with the clean known content makes known-pixel
preservation exact for any model, trained or not.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .checkpoint import load_checkpoint, save_checkpoint
from .diffusion import (
    BlockGenerator,
    ancestral_sample,
    fields_to_training_tensor,
    noise_batch,
    schedule_tensors,
)
from .errors import ConfigurationError, DataError
from .fields import (
    DIFFUSION,
    OneHotField,
    Palette,
    SemanticField,
    decode_argmax,
    encode_one_hot,
    palette_map_nearest,
)
from .gridops import class_boundary_mask, dilate_chebyshev, resize_nearest
from .schedule import make_schedule
from .unet import UNet
from .validation import as_mask, as_rgb_raster, check_same_shape

PAINT_MODES = ("inpaint", "outpaint")
SENTINEL_COLOR = (255, 0, 255)


@dataclass
class PaintTask:
    """One conditional repaint request.

    The field carries real content in the known (mask=1) region; unknown
    pixels may hold anything. Every task needs something to paint, and
    outpainting additionally needs a known anchor.
    """

    field: SemanticField
    mask: np.ndarray
    mode: str = "inpaint"
    model_scale: str = "S128"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in PAINT_MODES:
            raise ConfigurationError(f"mode must be one of {PAINT_MODES}, got {self.mode!r}")
        self.mask = as_mask(self.mask, self.field.shape)
        if self.mask.all():
            raise DataError("mask is all-known: nothing to paint")
        if self.mode == "outpaint" and not self.mask.any():
            raise DataError("outpaint task needs at least one known pixel as anchor")


def edge_repaint_mask(field: SemanticField, dilate_radius: int = 2) -> np.ndarray:
    """Mask that is 0 within Chebyshev distance `dilate_radius` of any class
    boundary (a pixel with a 4-neighbor of a different class), 1 elsewhere.

    Class-id grids are noise-free, so boundary detection plus dilation plays
    the role edge detection does on photographs.
    """
    band = dilate_chebyshev(class_boundary_mask(field.grid), dilate_radius)
    return (~band).astype(np.uint8)


def outpaint_mask(shape: tuple, known_rect: tuple) -> np.ndarray:
    """Mask with 1 inside known_rect = (row, col, height, width), 0 outside."""
    h, w = shape
    r0, c0, rh, rw = known_rect
    if rh <= 0 or rw <= 0:
        raise DataError("known_rect is empty")
    if r0 < 0 or c0 < 0 or r0 + rh > h or c0 + rw > w:
        raise DataError(f"known_rect {known_rect} exceeds shape {shape}")
    if rh == h and rw == w:
        raise DataError("known_rect covers the whole canvas: nothing to outpaint")
    mask = np.zeros(shape, dtype=np.uint8)
    mask[r0 : r0 + rh, c0 : c0 + rw] = 1
    return mask


def blended_step(s_t_ori, s_t_ref, mask) -> np.ndarray:
    """Blend of noised known content and the sampler's current state:
    s_t = s_t_ori * m + s_t_ref * (1 - m), elementwise across channels.
    """
    s_t_ori = np.asarray(s_t_ori, dtype=np.float64)
    s_t_ref = np.asarray(s_t_ref, dtype=np.float64)
    check_same_shape(s_t_ori, s_t_ref, "blend inputs")
    m = as_mask(mask, s_t_ori.shape[:2]).astype(np.float64)
    if s_t_ori.ndim == 3:
        m = m[:, :, None]
    return s_t_ori * m + s_t_ref * (1.0 - m)


def random_inpaint_mask(shape, rng, grid=None, boundary_radius: int = 2) -> np.ndarray:
    """Training mask: random rectangles, optionally unioned with the dilated
    class boundaries of the ground-truth grid. Known ratio stays in (0.1, 0.9).
    """
    h, w = shape
    unknown = np.zeros(shape, dtype=bool)
    target = rng.uniform(0.12, 0.84)
    if grid is not None and rng.random() < 0.5:
        band = dilate_chebyshev(class_boundary_mask(grid), boundary_radius)
        if band.mean() <= 0.5:
            unknown |= band
    # each rectangle is <= ~5% of the area, so the target is never overshot
    # far enough to leave (0.1, 0.9)
    max_h = max(2, int(0.22 * h))
    max_w = max(2, int(0.22 * w))
    for _ in range(10_000):
        if unknown.mean() >= target:
            break
        rh = int(rng.integers(2, max_h + 1))
        rw = int(rng.integers(2, max_w + 1))
        r0 = int(rng.integers(0, h - rh + 1))
        c0 = int(rng.integers(0, w - rw + 1))
        unknown[r0 : r0 + rh, c0 : c0 + rw] = True
    return (~unknown).astype(np.uint8)


def random_outpaint_mask(shape, rng) -> np.ndarray:
    """Training mask: a known rectangle anchored at a random corner, unknown
    elsewhere. Known ratio stays in (0.1, 0.9).
    """
    h, w = shape
    area = rng.uniform(0.12, 0.88)
    fx = rng.uniform(np.sqrt(area), 1.0)
    fy = area / fx
    kh = min(max(int(round(fy * h)), 1), h)
    kw = min(max(int(round(fx * w)), 1), w)
    while kh * kw <= 0.10 * h * w:
        if kh <= kw and kh < h:
            kh += 1
        elif kw < w:
            kw += 1
        else:
            break
    while kh * kw >= 0.90 * h * w:
        if kh >= kw and kh > 1:
            kh -= 1
        elif kw > 1:
            kw -= 1
        else:
            break
    corner = int(rng.integers(0, 4))
    r0 = 0 if corner in (0, 1) else h - kh
    c0 = 0 if corner in (0, 2) else w - kw
    return outpaint_mask(shape, (r0, c0, kh, kw))


def sketch_to_task(
    sketch,
    palette: Palette,
    model_scale: str = "S128",
    sentinel=SENTINEL_COLOR,
    seed: int = 0,
) -> PaintTask:
    """Convert a sketch raster into a paint task.

    Pixels exactly matching the sentinel color are unknown (mask 0); every
    other pixel snaps to its nearest palette class and is preserved.
    """
    arr = as_rgb_raster(sketch)
    colors = {tuple(c.color) for c in palette.classes}
    if tuple(sentinel) in colors:
        raise ConfigurationError(f"sentinel color {sentinel} collides with a palette color")
    unknown = np.all(arr == np.asarray(sentinel, dtype=np.float64), axis=2)
    if unknown.all():
        raise DataError("sketch is entirely unknown: add at least one known pixel")
    if not unknown.any():
        raise DataError("sketch has no unknown pixels: nothing to paint")
    snapped = palette_map_nearest(arr, palette, scale_tag=model_scale)
    grid = np.array(snapped.grid)
    grid[unknown] = 0  # placeholder under the unknown region; never preserved
    field = SemanticField(grid, palette, model_scale)
    return PaintTask(field, (~unknown).astype(np.uint8), "inpaint", model_scale, seed)


class PaintGenerator(BaseEstimator):
    """Mask-conditioned repainting model (inpainting or outpainting).

    Initialized from a fitted block generator at the same scale: weights are
    copied and the first conv layer's extra mask-conditioning input channels
    start at zero, so the freshly initialized paint model reproduces the
    block model's predictions exactly.
    """

    def __init__(
        self,
        block=None,
        mode: str = "inpaint",
        learning_rate: float = 1e-5,
        batch_size: int = 16,
        epochs: int = 20,
        boundary_radius: int = 2,
        seed: int = 0,
    ):
        self.block = block
        self.mode = mode
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.boundary_radius = boundary_radius
        self.seed = seed

    # -- initialization from the block model --------------------------------

    def _resolve_block(self) -> BlockGenerator:
        block = self.block
        if isinstance(block, (str, bytes)) or hasattr(block, "__fspath__"):
            block = BlockGenerator.load(block)
        if block is None or not hasattr(block, "model_"):
            raise ConfigurationError("paint training requires a fitted block model or checkpoint")
        if block.train_space != "one_hot":
            raise ConfigurationError("paint models condition on one-hot fields; block model is rgb")
        return block

    def init_from_block(self, block: BlockGenerator) -> "PaintGenerator":
        """Build the paint denoiser from block weights with zero-initialized
        extra input channels; usable untrained (reproduces the block model).
        """
        if self.mode not in PAINT_MODES:
            raise ConfigurationError(f"mode must be one of {PAINT_MODES}, got {self.mode!r}")
        c = len(block.palette_)
        model = UNet(
            2 * c + 1,
            c,
            base_width=block.base_width,
            depth=block.depth,
            time_embed_dim=block.time_embed_dim,
        )
        state = {k: v.clone() for k, v in block.model_.state_dict().items()}
        stem_w = state["stem.weight"]  # (w0, C, 3, 3)
        new_stem = torch.zeros((stem_w.shape[0], 2 * c + 1) + stem_w.shape[2:])
        new_stem[:, c + 1 :] = stem_w  # x_t occupies the trailing C channels
        state["stem.weight"] = new_stem
        model.load_state_dict(state)

        self.model_ = model
        self.palette_ = block.palette_
        self.scale_tag_ = block.scale_tag
        self.timesteps_ = block.timesteps
        self.train_side_ = block.train_side
        self.base_width_ = block.base_width
        self.depth_ = block.depth
        self.time_embed_dim_ = block.time_embed_dim
        self.schedule_ = make_schedule(block.timesteps)
        self.loss_curve_ = []
        return self

    # -- training ------------------------------------------------------------

    def fit(self, X, y=None):
        block = self._resolve_block()
        self.init_from_block(block)
        fields = list(X)
        if not fields:
            raise ConfigurationError("training corpus is empty")

        side = self.train_side_
        x0 = fields_to_training_tensor(fields, self.palette_, side, "one_hot")
        grids = [resize_nearest(f.grid, (side, side)) for f in fields]

        tensors = schedule_tensors(self.schedule_)
        optimizer = torch.optim.Adam(self.model_.parameters(), lr=self.learning_rate)
        generator = torch.Generator("cpu").manual_seed(self.seed ^ 0x5EED)
        mask_rng = np.random.default_rng(self.seed)
        shuffler = np.random.default_rng(self.seed + 1)

        n = x0.shape[0]
        curve = []
        for _ in range(self.epochs):
            order = shuffler.permutation(n)
            losses = []
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                batch = x0[idx]
                masks = np.stack([self._draw_mask(grids[i], mask_rng) for i in idx])
                m = torch.from_numpy(masks).float()[:, None]
                t, eps, xt = noise_batch(batch, tensors, generator)
                pred = self.model_(torch.cat([m, m * xt, xt], dim=1), t)
                if not torch.isfinite(pred).all():
                    raise DataError("denoiser produced non-finite output")
                loss = torch.mean((pred - eps) ** 2)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(float(loss.detach()))
            curve.append(float(np.mean(losses)))
        self.loss_curve_ = curve
        return self

    def _draw_mask(self, grid, rng) -> np.ndarray:
        if self.mode == "inpaint":
            return random_inpaint_mask(grid.shape, rng, grid, self.boundary_radius)
        return random_outpaint_mask(grid.shape, rng)

    # -- inference -----------------------------------------------------------

    def _require_ready(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("PaintGenerator has no denoiser; call fit(), init_from_block(), or load()")

    def paint(self, task: PaintTask) -> SemanticField:
        return paint_sample(task, self)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        self._require_ready()
        meta = {
            "kind": "paint",
            "mode": self.mode,
            "scale_tag": self.scale_tag_,
            "timesteps": self.timesteps_,
            "train_side": self.train_side_,
            "base_width": self.base_width_,
            "depth": self.depth_,
            "time_embed_dim": self.time_embed_dim_,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "boundary_radius": self.boundary_radius,
            "seed": self.seed,
            "palette": [
                {"id": c.id, "name": c.name, "color": list(c.color)}
                for c in self.palette_.classes
            ],
            "loss_curve": list(self.loss_curve_),
        }
        save_checkpoint(path, meta, self.model_.state_dict())

    @classmethod
    def load(cls, path) -> "PaintGenerator":
        meta, state = load_checkpoint(path)
        if meta.get("kind") != "paint":
            raise ConfigurationError(f"{path} is a {meta.get('kind')!r} checkpoint, expected paint")
        palette = Palette.from_json(json.dumps(meta["palette"]))
        est = cls(
            mode=meta["mode"],
            learning_rate=meta["learning_rate"],
            batch_size=meta["batch_size"],
            epochs=meta["epochs"],
            boundary_radius=meta.get("boundary_radius", 2),
            seed=meta["seed"],
        )
        c = len(palette)
        est.model_ = UNet(
            2 * c + 1,
            c,
            base_width=meta["base_width"],
            depth=meta["depth"],
            time_embed_dim=meta["time_embed_dim"],
        )
        est.model_.load_state_dict(state)
        est.palette_ = palette
        est.scale_tag_ = meta["scale_tag"]
        est.timesteps_ = meta["timesteps"]
        est.train_side_ = meta["train_side"]
        est.base_width_ = meta["base_width"]
        est.depth_ = meta["depth"]
        est.time_embed_dim_ = meta["time_embed_dim"]
        est.schedule_ = make_schedule(meta["timesteps"])
        est.loss_curve_ = list(meta.get("loss_curve", []))
        return est


def paint_sample(task: PaintTask, generator: PaintGenerator) -> SemanticField:
    """Repaint the unknown region of a task; known pixels are preserved
    exactly for any model because every step re-blends the known region and
    the final state is blended with the clean known content.
    """
    fields = paint_sample_batch([task], generator, seed=task.seed)
    return fields[0]


def paint_sample_batch(tasks: list, generator: PaintGenerator, seed: int) -> list:
    """Paint several same-shaped tasks in one ancestral pass (shared seed)."""
    generator._require_ready()
    if not tasks:
        return []
    scales = {t.model_scale for t in tasks}
    if scales != {generator.scale_tag_}:
        raise ConfigurationError(
            f"task scale(s) {sorted(scales)} do not match model scale {generator.scale_tag_}"
        )
    shapes = {t.field.shape for t in tasks}
    if len(shapes) != 1:
        raise DataError("batched paint tasks must share one shape")
    h, w = shapes.pop()
    if h % (2**generator.depth_) or w % (2**generator.depth_):
        raise ConfigurationError(
            f"field sides must be divisible by {2**generator.depth_} for this denoiser"
        )

    palette = generator.palette_
    c = len(palette)
    x_known = torch.stack(
        [
            torch.from_numpy(encode_one_hot(t.field, DIFFUSION).values.transpose(2, 0, 1))
            for t in tasks
        ]
    ).float()
    m = torch.from_numpy(np.stack([t.mask for t in tasks])).float()[:, None]
    tensors = schedule_tensors(generator.schedule_)

    def blend(x, t, rng):
        if t == 0:
            return x_known * m + x * (1.0 - m)
        ab = tensors["alpha_bars"][t - 1]
        eps = torch.randn(x.shape, generator=rng)
        s_ori = torch.sqrt(ab) * x_known + torch.sqrt(1.0 - ab) * eps
        return s_ori * m + x * (1.0 - m)

    def conditioned(x, t_vec):
        return generator.model_(torch.cat([m, m * x, x], dim=1), t_vec)

    x0 = ancestral_sample(conditioned, generator.schedule_, (len(tasks), c, h, w), seed, blend=blend)
    out = []
    for arr, task in zip(x0.numpy(), tasks):
        hwc = np.ascontiguousarray(arr.transpose(1, 2, 0))
        field = decode_argmax(
            OneHotField(hwc, DIFFUSION, palette),
            task.field.scale_tag,
            task.field.meters_per_pixel,
        )
        out.append(field)
    return out
