"""Single `citygen` entry point exposing every pipeline stage.

Every generative subcommand requires an explicit --seed (no hidden entropy)
and writes a replayable run manifest next to its outputs.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from .checkpoint import checkpoint_fingerprint
from .datasets import (
    CleaningPolicy,
    CropSpec,
    build_corpus_from_rasters,
    build_toy_corpus,
    load_corpus,
)
from .diffusion import BlockGenerator
from .errors import CityGenError, ConfigurationError
from .fields import (
    Palette,
    default_palette,
    load_field_png,
    save_field_png,
)
from .heights import (
    HeightConfig,
    compose_height_field,
    default_height_config,
    load_height_png,
    save_height_npz,
    save_height_png,
)
from .metrics import FeatureSpec, score_sets
from .painting import PaintGenerator, PaintTask, paint_sample, sketch_to_task
from .refinement import RefineStage, refine_cascade
from .tiling import expand_from
from .validation import as_mask
from .voxels import export_voxels, lift_to_voxels

log = logging.getLogger("citygen")

SCALE_FLAG_TO_TAG = {"128": "S128", "256": "S256", "512": "S512"}


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_run_manifest(
    outputs: list,
    seeds: dict | None = None,
    configs: dict | None = None,
    checkpoints: dict | None = None,
    started: float | None = None,
) -> Path:
    """Record enough to replay the run; written atomically next to outputs."""
    outputs = [Path(o) for o in outputs]
    anchor = outputs[0]
    target = anchor / "run_manifest.json" if anchor.is_dir() else Path(str(anchor) + ".manifest.json")
    manifest = {
        "argv": sys.argv,
        "seeds": seeds or {},
        "config_digests": {k: _file_digest(v) for k, v in (configs or {}).items()},
        "checkpoint_fingerprints": {
            k: checkpoint_fingerprint(v) for k, v in (checkpoints or {}).items()
        },
        "outputs": [str(o) for o in outputs],
        "wall_time_s": (time.time() - started) if started else None,
    }
    tmp = target.with_suffix(target.suffix + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2))
    os.replace(tmp, target)
    return target


def _load_palette(path) -> Palette:
    return Palette.load(path) if path else default_palette()


@click.group()
@click.option("--log-level", default="WARNING", show_default=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="Global JSON config (palette path, defaults).")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Base directory for relative output paths.")
@click.pass_context
def cli(ctx, log_level, config_file, out_dir):
    """Semantic city-layout generation pipeline."""
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.WARNING))
    ctx.ensure_object(dict)
    ctx.obj["config_file"] = config_file
    ctx.obj["out_dir"] = Path(out_dir) if out_dir else None
    if config_file:
        ctx.obj["config"] = json.loads(Path(config_file).read_text())
    else:
        ctx.obj["config"] = {}


def _resolve_out(ctx, path) -> Path:
    path = Path(path)
    base = ctx.obj.get("out_dir")
    if base and not path.is_absolute():
        base.mkdir(parents=True, exist_ok=True)
        return base / path
    return path


@cli.group()
def corpus():
    """Build training corpora."""


@corpus.command("build")
@click.option("--in", "in_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--sizes", default="128,256,512", show_default=True)
@click.option("--stride", type=int, default=None, help="Stride in px (default: patch size).")
@click.option("--palette", "palette_path", type=click.Path(exists=True), default=None)
@click.option("--edge-band", type=int, default=1, show_default=True)
@click.pass_context
def corpus_build(ctx, in_dir, out_dir, sizes, stride, palette_path, edge_band):
    """Post-process rendered rasters and crop them into filtered patches."""
    started = time.time()
    out = _resolve_out(ctx, out_dir)
    sizes_tuple = tuple(int(s) for s in sizes.split(","))
    spec = CropSpec(sizes=sizes_tuple, stride=stride)
    records = build_corpus_from_rasters(
        in_dir, out, palette=_load_palette(palette_path), spec=spec, edge_band=edge_band
    )
    accepted = sum(r["accepted"] for r in records)
    click.echo(f"wrote {len(records)} patches ({accepted} accepted) to {out}")
    write_run_manifest([out], configs={"palette": palette_path} if palette_path else {}, started=started)


@corpus.command("toy")
@click.option("--n", "count", type=int, required=True)
@click.option("--side", type=int, default=128, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--palette", "palette_path", type=click.Path(exists=True), default=None)
@click.pass_context
def corpus_toy(ctx, count, side, seed, out_dir, palette_path):
    """Generate a synthetic toy-city corpus."""
    started = time.time()
    out = _resolve_out(ctx, out_dir)
    records = build_toy_corpus(out, count, side=side, seed=seed, palette=_load_palette(palette_path))
    accepted = sum(r["accepted"] for r in records)
    click.echo(f"wrote {len(records)} toy patches ({accepted} accepted) to {out}")
    write_run_manifest([out], seeds={"corpus": seed}, started=started)


@cli.command("train-bg")
@click.option("--scale", type=click.Choice(sorted(SCALE_FLAG_TO_TAG)), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--timesteps", type=int, default=1000, show_default=True)
@click.option("--train-side", type=int, default=128, show_default=True)
@click.option("--base-width", type=int, default=32, show_default=True)
@click.option("--depth", type=int, default=2, show_default=True)
@click.option("--train-space", type=click.Choice(["one_hot", "rgb"]), default="one_hot", show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def train_bg(ctx, scale, corpus_dir, epochs, lr, batch_size, timesteps, train_side,
             base_width, depth, train_space, seed, out_path):
    """Train a block generation model on a corpus."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    tag = SCALE_FLAG_TO_TAG[scale]
    fields = [f for f in load_corpus(corpus_dir) if f.scale_tag == tag]
    if not fields:
        raise ConfigurationError(f"corpus {corpus_dir} holds no accepted {tag} patches")
    est = BlockGenerator(
        scale_tag=tag,
        timesteps=timesteps,
        train_side=train_side,
        base_width=base_width,
        depth=depth,
        learning_rate=lr,
        batch_size=batch_size,
        epochs=epochs,
        train_space=train_space,
        seed=seed,
    ).fit(fields)
    est.save(out)
    click.echo(f"trained on {len(fields)} fields; final loss {est.loss_curve_[-1]:.4f}; saved {out}")
    write_run_manifest([out], seeds={"train": seed}, started=started)


@cli.command("train-paint")
@click.option("--mode", type=click.Choice(["inpaint", "outpaint"]), required=True)
@click.option("--block-ckpt", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--lr", type=float, default=1e-5, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def train_paint(ctx, mode, block_ckpt, corpus_dir, epochs, lr, batch_size, seed, out_path):
    """Train an inpainting/outpainting model initialized from a block model."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    block = BlockGenerator.load(block_ckpt)
    fields = [f for f in load_corpus(corpus_dir) if f.scale_tag == block.scale_tag]
    if not fields:
        raise ConfigurationError(f"corpus {corpus_dir} holds no accepted {block.scale_tag} patches")
    est = PaintGenerator(
        block=block, mode=mode, learning_rate=lr, batch_size=batch_size, epochs=epochs, seed=seed
    ).fit(fields)
    est.save(out)
    click.echo(f"trained {mode} on {len(fields)} fields; final loss {est.loss_curve_[-1]:.4f}; saved {out}")
    write_run_manifest([out], seeds={"train": seed}, checkpoints={"block": block_ckpt}, started=started)


@cli.command("sample")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def sample(ctx, ckpt, seed, count, out_path):
    """Sample unconditional blocks from a trained model."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    est = BlockGenerator.load(ckpt)
    fields = est.sample(count, seed=seed)
    outputs = []
    if count == 1:
        save_field_png(fields[0], out)
        outputs.append(out)
    else:
        out.mkdir(parents=True, exist_ok=True)
        for i, f in enumerate(fields):
            path = out / f"sample_{i:04d}.png"
            save_field_png(f, path)
            outputs.append(path)
        outputs = [out]
    click.echo(f"sampled {count} field(s) -> {out}")
    write_run_manifest(outputs, seeds={"sample": seed}, checkpoints={"ckpt": ckpt}, started=started)


@cli.command("paint")
@click.option("--mode", type=click.Choice(["inpaint", "outpaint"]), required=True)
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True), required=True,
              help="Grayscale PNG; nonzero = known/preserved.")
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def paint(ctx, mode, ckpt, field_path, mask_path, seed, out_path):
    """Repaint the masked region of a field."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    est = PaintGenerator.load(ckpt)
    field = load_field_png(field_path, est.palette_, est.scale_tag_)
    from PIL import Image

    mask = (np.asarray(Image.open(mask_path).convert("L")) > 0).astype(np.uint8)
    task = PaintTask(field, as_mask(mask, field.shape), mode, est.scale_tag_, seed)
    save_field_png(paint_sample(task, est), out)
    click.echo(f"painted {mode} -> {out}")
    write_run_manifest([out], seeds={"paint": seed}, checkpoints={"ckpt": ckpt}, started=started)


@cli.command("sketch")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--sketch", "sketch_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def sketch(ctx, ckpt, sketch_path, seed, out_path):
    """Complete a user sketch (sentinel color = unknown) into a full field."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    est = PaintGenerator.load(ckpt)
    from PIL import Image

    raster = np.asarray(Image.open(sketch_path).convert("RGB"))
    task = sketch_to_task(raster, est.palette_, est.scale_tag_, seed=seed)
    save_field_png(paint_sample(task, est), out)
    click.echo(f"completed sketch ({int(task.mask.sum())} preserved px) -> {out}")
    write_run_manifest([out], seeds={"sketch": seed}, checkpoints={"ckpt": ckpt}, started=started)


@cli.command("expand")
@click.option("--seed-field", "seed_field_path", type=click.Path(exists=True), default=None)
@click.option("--target", required=True, help="Target size, e.g. 1024x1024.")
@click.option("--overlap", type=float, default=0.5, show_default=True)
@click.option("--ckpt-bg", type=click.Path(exists=True), default=None,
              help="Block model; samples the seed block when --seed-field is omitted.")
@click.option("--ckpt-out", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def expand(ctx, seed_field_path, target, overlap, ckpt_bg, ckpt_out, seed, out_path):
    """Grow a seed block into a large global field via sliding outpainting."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    try:
        th, tw = (int(v) for v in target.lower().split("x"))
    except ValueError:
        raise click.UsageError(f"--target must look like 1024x1024, got {target!r}")
    paint_model = PaintGenerator.load(ckpt_out)
    if seed_field_path:
        seed_field = load_field_png(seed_field_path, paint_model.palette_, paint_model.scale_tag_)
    elif ckpt_bg:
        seed_field = BlockGenerator.load(ckpt_bg).sample(1, seed=seed)[0]
    else:
        raise click.UsageError("provide --seed-field or --ckpt-bg")
    result = expand_from(seed_field, (th, tw), overlap, paint_model, seed=seed)
    save_field_png(result, out)
    click.echo(f"expanded to {th}x{tw} -> {out}")
    ckpts = {"ckpt_out": ckpt_out}
    if ckpt_bg:
        ckpts["ckpt_bg"] = ckpt_bg
    write_run_manifest([out], seeds={"expand": seed}, checkpoints=ckpts, started=started)


@cli.command("refine")
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--ckpt-in256", type=click.Path(exists=True), required=True)
@click.option("--ckpt-in128", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def refine(ctx, field_path, ckpt_in256, ckpt_in128, seed, out_path):
    """Upsample 4x and repaint class boundaries with finer-scale models."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    m256 = PaintGenerator.load(ckpt_in256)
    m128 = PaintGenerator.load(ckpt_in128)
    field = load_field_png(field_path, m256.palette_, "S512")
    stages = (
        RefineStage("S256", dilate_radius=2, window_side=m256.train_side_),
        RefineStage("S128", dilate_radius=3, window_side=m128.train_side_),
    )
    result = refine_cascade(field, {"S256": m256, "S128": m128}, seed=seed, stages=stages)
    save_field_png(result, out)
    click.echo(f"refined {field.shape} -> {result.shape} -> {out}")
    write_run_manifest(
        [out],
        seeds={"refine": seed},
        checkpoints={"ckpt_in256": ckpt_in256, "ckpt_in128": ckpt_in128},
        started=started,
    )


@cli.command("heights")
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--palette", "palette_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def heights(ctx, field_path, config_path, palette_path, seed, out_path):
    """Synthesize a height field for a semantic field."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    cfg = HeightConfig.load(config_path) if config_path else default_height_config()
    field = load_field_png(field_path, _load_palette(palette_path))
    hf = compose_height_field(field, cfg, seed)
    save_height_png(hf, out)
    save_height_npz(hf, Path(str(out) + ".npz"))
    click.echo(f"heights (max {hf.grid.max():.1f} m) -> {out}")
    write_run_manifest(
        [out],
        seeds={"heights": seed},
        configs={"heights": config_path} if config_path else {},
        started=started,
    )


@cli.command("lift")
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--heights", "heights_path", type=click.Path(exists=True), required=True)
@click.option("--palette", "palette_path", type=click.Path(exists=True), default=None)
@click.option("--voxel-size", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="layout.json (run-length) or layout.obj (mesh).")
@click.pass_context
def lift(ctx, field_path, heights_path, palette_path, voxel_size, out_path):
    """Lift a (field, heights) pair into a 3D voxel layout."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    field = load_field_png(field_path, _load_palette(palette_path))
    hf = load_height_png(heights_path)
    layout = lift_to_voxels(field, hf, voxel_size)
    fmt = "mesh_obj" if str(out).endswith(".obj") else "runlength_json"
    out.write_bytes(export_voxels(layout, fmt))
    click.echo(f"lifted {layout.total_voxels} voxels ({fmt}) -> {out}")
    write_run_manifest([out], started=started)


@cli.command("eval")
@click.option("--set-a", "set_a", type=click.Path(exists=True), required=True)
@click.option("--set-b", "set_b", type=click.Path(exists=True), required=True)
@click.option("--metric", default="fid,kid", show_default=True)
@click.option("--extractor", default="fixed:0", show_default=True)
@click.option("--palette", "palette_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def eval_cmd(ctx, set_a, set_b, metric, extractor, palette_path, out_path):
    """Score two sample sets (directories of field PNGs) with FID/KID."""
    started = time.time()
    out = _resolve_out(ctx, out_path)
    kind, _, seed_text = extractor.partition(":")
    if kind != "fixed":
        raise click.UsageError("only the fixed:SEED extractor is available on the CLI")
    spec = FeatureSpec(seed=int(seed_text or 0))
    palette = _load_palette(palette_path)

    def load_dir(d):
        paths = sorted(Path(d).glob("*.png"))
        if not paths:
            raise ConfigurationError(f"{d} holds no .png fields")
        return [load_field_png(p, palette) for p in paths]

    report = score_sets(load_dir(set_a), load_dir(set_b), spec)
    wanted = {m.strip() for m in metric.split(",")}
    payload = json.loads(report.to_json())
    payload = {k: v for k, v in payload.items() if k in wanted | {"n_a", "n_b", "extractor"}}
    out.write_text(json.dumps(payload, indent=2))
    click.echo(json.dumps(payload))
    write_run_manifest([out], started=started)


@cli.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--host", default=None, help="Overrides config/env bind host.")
@click.option("--port", type=int, default=None, help="Overrides config/env bind port.")
def serve(config_path, host, port):
    """Run the HTTP generation service."""
    import uvicorn

    from .server import ServiceConfig, create_app

    raw = json.loads(Path(config_path).read_text())
    palette = Palette.load(raw["palette"]) if raw.get("palette") else default_palette()
    blocks, paints, fingerprints = {}, {}, {}
    for tag, path in raw.get("blocks", {}).items():
        blocks[tag] = BlockGenerator.load(path)
        fingerprints[f"block:{tag}"] = checkpoint_fingerprint(path)
    for key, path in raw.get("paints", {}).items():
        tag, _, mode = key.partition(":")
        paints[(tag, mode or "inpaint")] = PaintGenerator.load(path)
        fingerprints[f"paint:{key}"] = checkpoint_fingerprint(path)
    height_config = (
        HeightConfig.load(raw["height_config"]) if raw.get("height_config") else default_height_config()
    )
    config = ServiceConfig(
        palette=palette,
        block=blocks,
        paint=paints,
        height_config=height_config,
        store_dir=os.environ.get("CITYGEN_STORE_DIR", raw.get("store_dir", "artifacts")),
        workers=int(os.environ.get("CITYGEN_WORKERS", raw.get("workers", 1))),
        expand_scale=raw.get("expand_scale"),
        checkpoint_fingerprints=fingerprints,
    )
    app = create_app(config)
    bind_host = host or os.environ.get("CITYGEN_HOST", raw.get("host", "127.0.0.1"))
    bind_port = port or int(os.environ.get("CITYGEN_PORT", raw.get("port", 8080)))
    uvicorn.run(app, host=bind_host, port=bind_port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1
    except CityGenError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
