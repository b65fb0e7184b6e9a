"""One-hot-space DDPM block generation: training on noise prediction and
ancestral sampling back to semantic fields.

`BlockGenerator` follows the scikit-learn estimator convention: constructor
arguments are hyperparameters, `fit` learns the denoiser, learned state lives
in trailing-underscore attributes.
"""
from __future__ import annotations

import json

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigurationError, DataError
from .fields import (
    DIFFUSION,
    OneHotField,
    Palette,
    SemanticField,
    decode_argmax,
    encode_one_hot,
    field_to_rgb,
    palette_map_nearest,
)
from .gridops import resize_nearest
from .schedule import NoiseSchedule, make_schedule
from .unet import UNet

TRAIN_SPACES = ("one_hot", "rgb")


def schedule_tensors(sched: NoiseSchedule) -> dict:
    return {
        "betas": torch.from_numpy(np.array(sched.betas)).float(),
        "alphas": torch.from_numpy(sched.alphas).float(),
        "alpha_bars": torch.from_numpy(sched.alpha_bars).float(),
    }


def eps_loss(model, x0: torch.Tensor, sched: NoiseSchedule, generator: torch.Generator):
    """Noise-prediction objective: E_{t,eps} ||eps - model(x_t, t)||^2.

    t is uniform over 1..T per sample; the loss is the MSE averaged over all
    elements of the batch.
    """
    tensors = schedule_tensors(sched)
    return _eps_loss(model, x0, tensors, generator)


def noise_batch(x0, tensors, generator):
    """Draw (t, eps, x_t) for a batch: t ~ U(1,T), eps ~ N(0,I)."""
    b = x0.shape[0]
    t = torch.randint(1, tensors["betas"].numel() + 1, (b,), generator=generator)
    eps = torch.randn(x0.shape, generator=generator)
    ab = tensors["alpha_bars"][t - 1].view(b, 1, 1, 1)
    xt = torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps
    return t, eps, xt


def _eps_loss(model, x0, tensors, generator):
    t, eps, xt = noise_batch(x0, tensors, generator)
    pred = model(xt, t)
    if not torch.isfinite(pred).all():
        raise DataError("denoiser produced non-finite output")
    return torch.mean((pred - eps) ** 2)


def ancestral_sample(
    model,
    sched: NoiseSchedule,
    shape: tuple,
    seed: int,
    blend=None,
    clip_denoised: bool = True,
) -> torch.Tensor:
    """Full-T ancestral DDPM sampling from pure noise; pure function of
    (weights, seed, shape, schedule).

    Uses the posterior q(x_{t-1} | x_t, x0_hat) with the predicted x0 clamped
    to [-1, 1] (both codings live there), which keeps short schedules stable.
    `blend`, when given, is called as blend(x, t, generator) after each
    transition (and with t=0 once at the end) so conditional samplers can
    overwrite known regions.
    """
    tensors = schedule_tensors(sched)
    generator = torch.Generator("cpu").manual_seed(seed)
    x = torch.randn(shape, generator=generator)
    was_training = getattr(model, "training", False)
    if hasattr(model, "eval"):
        model.eval()
    try:
        with torch.no_grad():
            for t in range(sched.timesteps, 0, -1):
                if blend is not None:
                    x = blend(x, t, generator)
                t_vec = torch.full((shape[0],), t, dtype=torch.long)
                eps = model(x, t_vec)
                beta = tensors["betas"][t - 1]
                alpha = tensors["alphas"][t - 1]
                ab = tensors["alpha_bars"][t - 1]
                ab_prev = tensors["alpha_bars"][t - 2] if t > 1 else torch.tensor(1.0)
                x0_hat = (x - torch.sqrt(1.0 - ab) * eps) / torch.sqrt(ab)
                if clip_denoised:
                    x0_hat = torch.clamp(x0_hat, -1.0, 1.0)
                mean = (
                    torch.sqrt(ab_prev) * beta * x0_hat
                    + torch.sqrt(alpha) * (1.0 - ab_prev) * x
                ) / (1.0 - ab)
                if t > 1:
                    var = (1.0 - ab_prev) / (1.0 - ab) * beta
                    x = mean + torch.sqrt(var) * torch.randn(shape, generator=generator)
                else:
                    x = mean
            if blend is not None:
                x = blend(x, 0, generator)
    finally:
        if hasattr(model, "train"):
            model.train(was_training)
    return x


def fields_to_training_tensor(fields, palette: Palette, side: int, train_space: str) -> torch.Tensor:
    """Stack fields into an (N, C, side, side) float tensor in model coding.

    Fields are nearest-neighbor downsampled to the training side before
    encoding; one_hot uses {-1,+1} channels, rgb scales colors to [-1, 1].
    """
    batches = []
    for field in fields:
        grid = resize_nearest(field.grid, (side, side))
        small = SemanticField(grid, palette, field.scale_tag, field.meters_per_pixel)
        if train_space == "one_hot":
            arr = encode_one_hot(small, DIFFUSION).values
        else:
            arr = field_to_rgb(small).astype(np.float32) / 127.5 - 1.0
        batches.append(arr.transpose(2, 0, 1))
    return torch.from_numpy(np.stack(batches)).float()


def decode_sample_tensor(
    x0: torch.Tensor, palette: Palette, train_space: str, scale_tag: str
) -> list:
    """Map raw denoised tensors back to semantic fields (argmax or nearest color)."""
    out = []
    for arr in x0.numpy():
        hwc = np.ascontiguousarray(arr.transpose(1, 2, 0))
        if train_space == "one_hot":
            field = decode_argmax(OneHotField(hwc, DIFFUSION, palette), scale_tag)
        else:
            rgb = np.clip((hwc + 1.0) * 127.5, 0.0, 255.0)
            field = palette_map_nearest(rgb, palette, scale_tag)
        out.append(field)
    return out


class BlockGenerator(BaseEstimator):
    """Unconditional layout-block generator: a DDPM over one-hot class maps.

    Parameters mirror the training configuration; `fit` consumes an iterable
    of SemanticField sharing one scale tag. After fitting (or `load`),
    `sample` draws decoded semantic fields deterministically per seed.
    """

    def __init__(
        self,
        palette=None,
        scale_tag: str = "S128",
        timesteps: int = 1000,
        train_side: int = 128,
        base_width: int = 32,
        depth: int = 2,
        time_embed_dim=None,
        learning_rate: float = 1e-4,
        batch_size: int = 16,
        epochs: int = 20,
        train_space: str = "one_hot",
        seed: int = 0,
    ):
        self.palette = palette
        self.scale_tag = scale_tag
        self.timesteps = timesteps
        self.train_side = train_side
        self.base_width = base_width
        self.depth = depth
        self.time_embed_dim = time_embed_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.train_space = train_space
        self.seed = seed

    # -- fitting -----------------------------------------------------------

    def _check_params(self):
        if self.train_space not in TRAIN_SPACES:
            raise ConfigurationError(f"train_space must be one of {TRAIN_SPACES}")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")

    def fit(self, X, y=None):
        self._check_params()
        fields = list(X)
        if not fields:
            raise ConfigurationError("training corpus is empty")
        tags = {f.scale_tag for f in fields}
        if len(tags) != 1:
            raise ConfigurationError(f"corpus mixes scale tags {sorted(tags)}")
        palette = self.palette or fields[0].palette
        if any(f.palette != palette for f in fields):
            raise ConfigurationError("corpus fields bound to different palettes")

        self.palette_ = palette
        self.schedule_ = make_schedule(self.timesteps)
        self.in_channels_ = len(palette) if self.train_space == "one_hot" else 3

        torch.manual_seed(self.seed)
        self.model_ = UNet(
            self.in_channels_,
            self.in_channels_,
            base_width=self.base_width,
            depth=self.depth,
            time_embed_dim=self.time_embed_dim,
        )
        x0 = fields_to_training_tensor(fields, palette, self.train_side, self.train_space)
        self.loss_curve_ = train_noise_predictor(
            self.model_,
            x0,
            self.schedule_,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
        )
        return self

    # -- sampling ----------------------------------------------------------

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("BlockGenerator is not fitted; call fit() or load()")

    def sample(self, n_samples: int = 1, seed: int = 0, side=None) -> list:
        """Draw `n_samples` semantic fields; deterministic given seed."""
        self._require_fitted()
        side = side or self.train_side
        shape = (n_samples, self.in_channels_, side, side)
        x0 = ancestral_sample(self.model_, self.schedule_, shape, seed)
        return decode_sample_tensor(x0, self.palette_, self.train_space, self.scale_tag)

    # -- persistence -------------------------------------------------------

    def _meta(self) -> dict:
        return {
            "kind": "block",
            "scale_tag": self.scale_tag,
            "timesteps": self.timesteps,
            "train_side": self.train_side,
            "base_width": self.base_width,
            "depth": self.depth,
            "time_embed_dim": self.time_embed_dim,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "train_space": self.train_space,
            "seed": self.seed,
            "palette": [
                {"id": c.id, "name": c.name, "color": list(c.color)}
                for c in self.palette_.classes
            ],
            "loss_curve": list(getattr(self, "loss_curve_", [])),
        }

    def save(self, path) -> None:
        self._require_fitted()
        save_checkpoint(path, self._meta(), self.model_.state_dict())

    @classmethod
    def load(cls, path) -> "BlockGenerator":
        meta, state = load_checkpoint(path)
        if meta.get("kind") != "block":
            raise ConfigurationError(f"{path} is a {meta.get('kind')!r} checkpoint, expected block")
        palette = Palette.from_json(json.dumps(meta["palette"]))
        est = cls(
            palette=palette,
            scale_tag=meta["scale_tag"],
            timesteps=meta["timesteps"],
            train_side=meta["train_side"],
            base_width=meta["base_width"],
            depth=meta["depth"],
            time_embed_dim=meta["time_embed_dim"],
            learning_rate=meta["learning_rate"],
            batch_size=meta["batch_size"],
            epochs=meta["epochs"],
            train_space=meta["train_space"],
            seed=meta["seed"],
        )
        est.palette_ = palette
        est.schedule_ = make_schedule(meta["timesteps"])
        est.in_channels_ = len(palette) if meta["train_space"] == "one_hot" else 3
        est.model_ = UNet(
            est.in_channels_,
            est.in_channels_,
            base_width=meta["base_width"],
            depth=meta["depth"],
            time_embed_dim=meta["time_embed_dim"],
        )
        est.model_.load_state_dict(state)
        est.loss_curve_ = list(meta.get("loss_curve", []))
        return est


def train_noise_predictor(
    model,
    x0: torch.Tensor,
    sched: NoiseSchedule,
    learning_rate: float,
    batch_size: int,
    epochs: int,
    seed: int,
) -> list:
    """Adam training loop over the noise-prediction loss; returns per-epoch
    mean losses. Batch order and noise draws are deterministic in `seed`.
    """
    tensors = schedule_tensors(sched)
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    generator = torch.Generator("cpu").manual_seed(seed ^ 0x5EED)
    shuffler = np.random.default_rng(seed)
    n = x0.shape[0]
    curve = []
    for _ in range(epochs):
        order = shuffler.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            batch = x0[order[start : start + batch_size]]
            loss = _eps_loss(model, batch, tensors, generator)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        curve.append(float(np.mean(losses)))
    return curve
