"""HTTP generation service: JSON-over-HTTP wrappers around the pipeline with
an in-process asynchronous job queue for long-running work.

All binary payloads travel base64-encoded; artifacts are stored
content-addressed on local disk and served back by job id. Generation
endpoints are deterministic given (checkpoint fingerprints, seed, request).
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import queue
import threading
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .errors import CityGenError, ConfigurationError, DataError
from .fields import (
    SCALE_TAGS,
    Palette,
    SemanticField,
    load_field_png,
    save_field_png,
)
from .heights import (
    HeightConfig,
    HeightField,
    compose_height_field,
    default_height_config,
    load_height_png,
    save_height_png,
)
from .painting import sketch_to_task, paint_sample
from .refinement import RefineStage, refine_cascade
from .tiling import expand_from
from .voxels import export_voxels, lift_to_voxels

JOB_KINDS = ("block", "inpaint", "outpaint", "expand", "refine", "heights", "lift")
JOB_STATES = ("queued", "running", "done", "failed", "canceled")


# -- job machinery -----------------------------------------------------------


@dataclass
class JobRecord:
    job_id: str
    kind: str
    state: str = "queued"
    request_digest: str = ""
    artifacts: tuple = ()
    error: str | None = None
    extra: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "request_digest": self.request_digest,
            "artifacts": list(self.artifacts),
            "error": self.error,
            "extra": dict(self.extra),
        }


class ArtifactStore:
    """Content-addressed blob store; the digest is the locator."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / digest
        if not path.exists():
            path.write_bytes(data)
        return digest

    def get(self, digest: str) -> bytes:
        path = self.root / digest
        if not path.exists():
            raise KeyError(digest)
        return path.read_bytes()


class JobQueue:
    """In-process queue with worker threads; job state never regresses and
    results are write-once.
    """

    def __init__(self, store: ArtifactStore, workers: int = 1):
        self.store = store
        self._records: dict = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue()
        self._threads = [
            threading.Thread(target=self._worker, daemon=True, name=f"citygen-job-{i}")
            for i in range(max(1, workers))
        ]
        for t in self._threads:
            t.start()

    def submit(self, kind: str, fn, request_digest: str) -> JobRecord:
        record = JobRecord(job_id=uuid.uuid4().hex, kind=kind, request_digest=request_digest)
        with self._lock:
            self._records[record.job_id] = record
        self._queue.put((record.job_id, fn))
        return record

    def get(self, job_id: str) -> JobRecord:
        with self._lock:
            record = self._records.get(job_id)
        if record is None:
            raise KeyError(job_id)
        return record

    def cancel(self, job_id: str) -> JobRecord:
        with self._lock:
            record = self._records.get(job_id)
            if record is None:
                raise KeyError(job_id)
            if record.state != "queued":
                raise RuntimeError(f"job is {record.state}; only queued jobs can be canceled")
            record.state = "canceled"
        return record

    def _worker(self) -> None:
        while True:
            job_id, fn = self._queue.get()
            with self._lock:
                record = self._records[job_id]
                if record.state != "queued":  # canceled while waiting
                    continue
                record.state = "running"
            try:
                artifacts, extra = fn()
                digests = tuple(self.store.put(a) for a in artifacts)
                with self._lock:
                    record.artifacts = digests
                    record.extra.update(extra)
                    record.state = "done"
            except Exception as exc:  # surface job faults in the record
                with self._lock:
                    record.error = f"{type(exc).__name__}: {exc}"
                    record.state = "failed"


# -- service configuration ----------------------------------------------------


@dataclass
class ServiceConfig:
    palette: Palette
    block: dict = dc_field(default_factory=dict)  # scale tag -> BlockGenerator
    paint: dict = dc_field(default_factory=dict)  # (scale tag, mode) -> PaintGenerator
    height_config: HeightConfig = dc_field(default_factory=default_height_config)
    store_dir: str = "artifacts"
    workers: int = 1
    expand_scale: str | None = None
    checkpoint_fingerprints: dict = dc_field(default_factory=dict)

    def resolve_expand_scale(self) -> str | None:
        if self.expand_scale:
            return self.expand_scale
        outpaint_scales = [scale for scale, mode in self.paint if mode == "outpaint"]
        if len(outpaint_scales) == 1:
            return outpaint_scales[0]
        return "S512" if ("S512", "outpaint") in self.paint else None


# -- request models ------------------------------------------------------------


class BlockRequest(BaseModel):
    scale: str
    seed: int
    count: int = 1


class SketchRequest(BaseModel):
    sketch_png_b64: str
    seed: int
    scale: str = "S128"


class ExpandRequest(BaseModel):
    field_png_b64: str
    target_w: int
    target_h: int
    overlap: float = 0.5
    seed: int = 0


class HeightsRequest(BaseModel):
    field_png_b64: str
    seed: int
    config: dict | None = None


class RefineRequest(BaseModel):
    field_png_b64: str
    seed: int


class LiftRequest(BaseModel):
    field_png_b64: str
    heights_png_b64: str
    meters_per_unit: float = 0.01
    voxel_size_m: float = 1.0
    format: str = "runlength_json"


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def _digest_request(payload: BaseModel) -> str:
    return hashlib.sha256(payload.model_dump_json().encode()).hexdigest()


def _decode_b64(data: str, code: str) -> bytes:
    try:
        return base64.b64decode(data, validate=True)
    except Exception:
        raise _error(415, code, "payload is not valid base64")


def _field_from_png_bytes(data: bytes, palette: Palette, scale_tag: str = "S128") -> SemanticField:
    try:
        return load_field_png(io.BytesIO(data), palette, scale_tag)
    except CityGenError:
        raise
    except Exception:
        raise _error(415, "undecodable_png", "payload does not decode as an indexed PNG")


def _field_png_bytes(field: SemanticField) -> bytes:
    buf = io.BytesIO()
    save_field_png(field, buf)
    return buf.getvalue()


# -- application ---------------------------------------------------------------


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="citygen service", version="1")
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = ArtifactStore(config.store_dir)
    jobs = JobQueue(store, workers=config.workers)
    app.state.config = config
    app.state.jobs = jobs

    def accepted(record: JobRecord):
        return Response(
            content=json.dumps({"job_id": record.job_id}),
            status_code=202,
            media_type="application/json",
        )

    @app.get("/v1/palette")
    def get_palette():
        return json.loads(config.palette.to_json())

    @app.post("/v1/blocks")
    def post_blocks(req: BlockRequest):
        if req.scale not in SCALE_TAGS:
            raise _error(400, "unknown_scale", f"scale must be one of {SCALE_TAGS}")
        model = config.block.get(req.scale)
        if model is None:
            raise _error(503, "model_not_loaded", f"no block model registered for {req.scale}")
        if req.count < 1:
            raise _error(400, "bad_count", "count must be >= 1")

        def run():
            fields = model.sample(req.count, seed=req.seed)
            return [_field_png_bytes(f) for f in fields], {"count": req.count}

        return accepted(jobs.submit("block", run, _digest_request(req)))

    @app.post("/v1/sketch")
    def post_sketch(req: SketchRequest):
        data = _decode_b64(req.sketch_png_b64, "undecodable_payload")
        try:
            from PIL import Image

            sketch = np.asarray(Image.open(io.BytesIO(data)).convert("RGB"))
        except Exception:
            raise _error(415, "undecodable_png", "sketch does not decode as a PNG")
        model = config.paint.get((req.scale, "inpaint"))
        if model is None:
            raise _error(503, "model_not_loaded", f"no inpaint model registered for {req.scale}")
        try:
            task = sketch_to_task(sketch, config.palette, req.scale, seed=req.seed)
        except DataError as exc:
            raise _error(422, "bad_sketch", str(exc))
        preserved = int(task.mask.sum())

        def run():
            out = paint_sample(task, model)
            return [_field_png_bytes(out)], {"preserved_pixels": preserved}

        return accepted(jobs.submit("inpaint", run, _digest_request(req)))

    @app.post("/v1/expand")
    def post_expand(req: ExpandRequest):
        scale = config.resolve_expand_scale()
        model = config.paint.get((scale, "outpaint")) if scale else None
        if model is None:
            raise _error(503, "model_not_loaded", "no outpaint model registered")
        data = _decode_b64(req.field_png_b64, "undecodable_payload")
        field = _field_from_png_bytes(data, config.palette, scale)
        side = model.train_side_
        if field.shape != (side, side):
            raise _error(422, "bad_field_side", f"seed field must be {side}x{side}")
        if req.target_h < side or req.target_w < side:
            raise _error(422, "bad_target", "target must be at least the seed size")

        def run():
            if (req.target_h, req.target_w) == field.shape:
                return [data], {"expanded": False}
            out = expand_from(field, (req.target_h, req.target_w), req.overlap, model, seed=req.seed)
            return [_field_png_bytes(out)], {"expanded": True}

        return accepted(jobs.submit("expand", run, _digest_request(req)))

    @app.post("/v1/heights")
    def post_heights(req: HeightsRequest):
        data = _decode_b64(req.field_png_b64, "undecodable_payload")
        field = _field_from_png_bytes(data, config.palette)
        cfg = config.height_config
        if req.config is not None:
            try:
                cfg = HeightConfig.from_json(json.dumps(req.config))
            except (CityGenError, TypeError, KeyError) as exc:
                raise _error(422, "bad_height_config", str(exc))

        def run():
            hf = compose_height_field(field, cfg, req.seed)
            buf = io.BytesIO()
            from PIL import Image

            quantized = np.floor(hf.grid / 0.01 + 0.5).astype(np.uint16)
            Image.fromarray(quantized).save(buf, format="PNG")
            sidecar = json.dumps({"meters_per_unit": 0.01, "shape": list(hf.shape)}).encode()
            return [buf.getvalue(), sidecar], {"max_height_m": float(hf.grid.max())}

        return accepted(jobs.submit("heights", run, _digest_request(req)))

    @app.post("/v1/refine")
    def post_refine(req: RefineRequest):
        models = {}
        stages = []
        for tag, radius in (("S256", 2), ("S128", 3)):
            model = config.paint.get((tag, "inpaint"))
            if model is None:
                raise _error(503, "model_not_loaded", f"no inpaint model registered for {tag}")
            models[tag] = model
            stages.append(RefineStage(tag, dilate_radius=radius, window_side=model.train_side_))
        data = _decode_b64(req.field_png_b64, "undecodable_payload")
        field = _field_from_png_bytes(data, config.palette, "S512")

        def run():
            out = refine_cascade(field, models, seed=req.seed, stages=tuple(stages))
            return [_field_png_bytes(out)], {}

        return accepted(jobs.submit("refine", run, _digest_request(req)))

    @app.post("/v1/lift")
    def post_lift(req: LiftRequest):
        field_data = _decode_b64(req.field_png_b64, "undecodable_payload")
        heights_data = _decode_b64(req.heights_png_b64, "undecodable_payload")
        field = _field_from_png_bytes(field_data, config.palette)
        try:
            from PIL import Image

            arr = np.asarray(Image.open(io.BytesIO(heights_data)), dtype=np.float64)
            heights = HeightField(arr * req.meters_per_unit)
        except CityGenError as exc:
            raise _error(422, "bad_heights", str(exc))
        except Exception:
            raise _error(415, "undecodable_png", "heights do not decode as a PNG")
        if field.shape != heights.shape:
            raise _error(422, "shape_mismatch", f"{field.shape} vs {heights.shape}")
        if req.format not in ("runlength_json", "mesh_obj"):
            raise _error(422, "bad_format", "format must be runlength_json or mesh_obj")

        def run():
            layout = lift_to_voxels(field, heights, req.voxel_size_m)
            payload = export_voxels(layout, req.format)
            return [payload], {"total_voxels": layout.total_voxels}

        return accepted(jobs.submit("lift", run, _digest_request(req)))

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            return jobs.get(job_id).to_dict()
        except KeyError:
            raise _error(404, "unknown_job", job_id)

    @app.delete("/v1/jobs/{job_id}")
    def delete_job(job_id: str):
        try:
            return jobs.cancel(job_id).to_dict()
        except KeyError:
            raise _error(404, "unknown_job", job_id)
        except RuntimeError as exc:
            raise _error(409, "not_cancelable", str(exc))

    @app.get("/v1/results/{job_id}")
    def get_result(job_id: str, index: int = 0):
        try:
            record = jobs.get(job_id)
        except KeyError:
            raise _error(404, "unknown_job", job_id)
        if record.state != "done":
            raise _error(409, "result_not_ready", f"job is {record.state}")
        if not 0 <= index < len(record.artifacts):
            raise _error(404, "no_such_artifact", f"index {index}")
        data = jobs.store.get(record.artifacts[index])
        return Response(content=data, media_type="application/octet-stream")

    return app
