import base64
import io
import json
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from citygen.fields import SemanticField, load_field_png, save_field_png, field_to_rgb
from citygen.painting import PaintGenerator
from citygen.server import ArtifactStore, JobQueue, ServiceConfig, create_app


def png_b64(field) -> str:
    buf = io.BytesIO()
    save_field_png(field, buf)
    return base64.b64encode(buf.getvalue()).decode()


def wait_done(client, job_id, timeout=120.0):
    start = time.time()
    states = []
    while time.time() - start < timeout:
        record = client.get(f"/v1/jobs/{job_id}").json()
        if not states or states[-1] != record["state"]:
            states.append(record["state"])
        if record["state"] in ("done", "failed", "canceled"):
            return record, states
        time.sleep(0.02)
    raise TimeoutError(states)


@pytest.fixture(scope="module")
def service(tmp_path_factory, palette, untrained_block, untrained_paint, untrained_outpaint):
    m256 = PaintGenerator(mode="inpaint").init_from_block(untrained_block)
    m256.scale_tag_ = "S256"
    config = ServiceConfig(
        palette=palette,
        block={"S128": untrained_block},
        paint={
            ("S128", "inpaint"): untrained_paint,
            ("S128", "outpaint"): untrained_outpaint,
            ("S256", "inpaint"): m256,
        },
        store_dir=str(tmp_path_factory.mktemp("artifacts")),
        workers=1,
    )
    app = create_app(config)
    with TestClient(app) as client:
        yield client, config


class TestPalette:
    def test_palette_parity(self, service, palette):
        client, _ = service
        response = client.get("/v1/palette")
        assert response.status_code == 200
        assert json.dumps(response.json()) == json.dumps(json.loads(palette.to_json()))


class TestBlocks:
    def test_block_job_flow(self, service, palette):
        client, _ = service
        response = client.post("/v1/blocks", json={"scale": "S128", "seed": 3, "count": 1})
        assert response.status_code == 202
        job_id = response.json()["job_id"]
        record, states = wait_done(client, job_id)
        assert record["state"] == "done"
        assert states == sorted(states, key=["queued", "running", "done"].index)
        artifact = client.get(f"/v1/results/{job_id}")
        assert artifact.status_code == 200
        field = load_field_png(io.BytesIO(artifact.content), palette)
        assert field.shape == (64, 64)

    def test_unknown_scale_400(self, service):
        client, _ = service
        assert client.post("/v1/blocks", json={"scale": "999", "seed": 0}).status_code == 400

    def test_missing_model_503(self, service):
        client, _ = service
        assert client.post("/v1/blocks", json={"scale": "S512", "seed": 0}).status_code == 503

    def test_same_seed_byte_identical(self, service):
        client, _ = service
        ids = []
        for _ in range(2):
            job_id = client.post("/v1/blocks", json={"scale": "S128", "seed": 11}).json()["job_id"]
            record, _ = wait_done(client, job_id)
            ids.append(record["artifacts"][0])
        assert ids[0] == ids[1]  # content-addressed: same digest == same bytes


class TestSketch:
    def test_sketch_flow_preserves_pixels(self, service, palette):
        client, _ = service
        sketch = np.full((64, 64, 3), (255, 0, 255), dtype=np.uint8)
        sketch[30:34, :] = palette.classes[4].color
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(sketch).save(buf, format="PNG")
        payload = {"sketch_png_b64": base64.b64encode(buf.getvalue()).decode(), "seed": 5}
        response = client.post("/v1/sketch", json=payload)
        assert response.status_code == 202
        record, _ = wait_done(client, response.json()["job_id"])
        assert record["state"] == "done"
        assert record["extra"]["preserved_pixels"] == 4 * 64
        artifact = client.get(f"/v1/results/{record['job_id']}")
        out = load_field_png(io.BytesIO(artifact.content), palette)
        assert (out.grid[30:34, :] == 4).all()

    def test_all_sentinel_422(self, service):
        client, _ = service
        sketch = np.full((64, 64, 3), (255, 0, 255), dtype=np.uint8)
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(sketch).save(buf, format="PNG")
        payload = {"sketch_png_b64": base64.b64encode(buf.getvalue()).decode(), "seed": 0}
        assert client.post("/v1/sketch", json=payload).status_code == 422

    def test_non_png_payload_415(self, service):
        client, _ = service
        payload = {"sketch_png_b64": base64.b64encode(b"not a png").decode(), "seed": 0}
        assert client.post("/v1/sketch", json=payload).status_code == 415


class TestExpand:
    def test_target_equals_input_returns_input_bytes(self, service, toy_fields):
        client, _ = service
        encoded = png_b64(toy_fields[0])
        response = client.post(
            "/v1/expand",
            json={"field_png_b64": encoded, "target_w": 64, "target_h": 64, "seed": 1},
        )
        assert response.status_code == 202
        record, _ = wait_done(client, response.json()["job_id"])
        assert record["state"] == "done"
        artifact = client.get(f"/v1/results/{record['job_id']}")
        assert base64.b64encode(artifact.content).decode() == encoded

    def test_expand_preserves_seed_region(self, service, toy_fields, palette):
        client, _ = service
        response = client.post(
            "/v1/expand",
            json={"field_png_b64": png_b64(toy_fields[1]), "target_w": 96, "target_h": 64, "seed": 2},
        )
        record, states = wait_done(client, response.json()["job_id"])
        assert record["state"] == "done"
        out = load_field_png(
            io.BytesIO(client.get(f"/v1/results/{record['job_id']}").content), palette
        )
        assert np.array_equal(out.grid[:64, :64], toy_fields[1].grid)

    def test_wrong_side_422(self, service, palette):
        client, _ = service
        small = SemanticField(np.zeros((32, 32), dtype=np.int32), palette)
        response = client.post(
            "/v1/expand",
            json={"field_png_b64": png_b64(small), "target_w": 64, "target_h": 64, "seed": 0},
        )
        assert response.status_code == 422

    def test_concurrent_jobs_isolated(self, service, toy_fields, palette):
        client, _ = service
        job_a = client.post(
            "/v1/expand",
            json={"field_png_b64": png_b64(toy_fields[2]), "target_w": 96, "target_h": 64, "seed": 7},
        ).json()["job_id"]
        job_b = client.post(
            "/v1/expand",
            json={"field_png_b64": png_b64(toy_fields[3]), "target_w": 96, "target_h": 64, "seed": 8},
        ).json()["job_id"]
        rec_a, _ = wait_done(client, job_a)
        rec_b, _ = wait_done(client, job_b)
        out_a = load_field_png(io.BytesIO(client.get(f"/v1/results/{job_a}").content), palette)
        out_b = load_field_png(io.BytesIO(client.get(f"/v1/results/{job_b}").content), palette)
        assert np.array_equal(out_a.grid[:, :64], toy_fields[2].grid)
        assert np.array_equal(out_b.grid[:, :64], toy_fields[3].grid)
        assert not np.array_equal(out_a.grid, out_b.grid)


class TestJobsApi:
    def test_unknown_job_404(self, service):
        client, _ = service
        assert client.get("/v1/jobs/nope").status_code == 404
        assert client.delete("/v1/jobs/nope").status_code == 404
        assert client.get("/v1/results/nope").status_code == 404

    def test_cancel_after_done_409(self, service):
        client, _ = service
        job_id = client.post("/v1/blocks", json={"scale": "S128", "seed": 21}).json()["job_id"]
        wait_done(client, job_id)
        assert client.delete(f"/v1/jobs/{job_id}").status_code == 409

    def test_result_before_done_409_or_queued(self, service, toy_fields):
        client, _ = service
        job_id = client.post(
            "/v1/expand",
            json={"field_png_b64": png_b64(toy_fields[4]), "target_w": 96, "target_h": 64, "seed": 9},
        ).json()["job_id"]
        response = client.get(f"/v1/results/{job_id}")
        assert response.status_code in (200, 409)
        wait_done(client, job_id)

    def test_cancel_while_queued(self, tmp_path):
        store = ArtifactStore(tmp_path / "store")
        jobs = JobQueue(store, workers=1)
        gate = threading.Event()

        def blocker():
            gate.wait(10)
            return [b"x"], {}

        blocking = jobs.submit("block", blocker, "digest")
        queued = jobs.submit("block", lambda: ([b"y"], {}), "digest")
        time.sleep(0.05)  # let the worker pick up the blocker
        record = jobs.cancel(queued.job_id)
        assert record.state == "canceled"
        gate.set()
        deadline = time.time() + 5
        while jobs.get(blocking.job_id).state not in ("done", "failed") and time.time() < deadline:
            time.sleep(0.01)
        assert jobs.get(blocking.job_id).state == "done"
        assert jobs.get(queued.job_id).state == "canceled"
        assert jobs.get(queued.job_id).artifacts == ()


class TestHeightsAndLift:
    def test_heights_then_lift_voxel_count(self, service, toy_fields, palette):
        client, _ = service
        field = toy_fields[5]
        response = client.post("/v1/heights", json={"field_png_b64": png_b64(field), "seed": 4})
        assert response.status_code == 202
        record, _ = wait_done(client, response.json()["job_id"])
        assert record["state"] == "done"
        height_png = client.get(f"/v1/results/{record['job_id']}?index=0").content
        sidecar = json.loads(client.get(f"/v1/results/{record['job_id']}?index=1").content)
        assert sidecar["shape"] == [64, 64]

        lift_req = {
            "field_png_b64": png_b64(field),
            "heights_png_b64": base64.b64encode(height_png).decode(),
            "meters_per_unit": sidecar["meters_per_unit"],
            "voxel_size_m": 1.0,
        }
        response = client.post("/v1/lift", json=lift_req)
        record, _ = wait_done(client, response.json()["job_id"])
        assert record["state"] == "done"
        payload = json.loads(client.get(f"/v1/results/{record['job_id']}").content)

        from PIL import Image

        arr = np.asarray(Image.open(io.BytesIO(height_png)), dtype=np.float64)
        heights = arr * sidecar["meters_per_unit"]
        expected = int(
            np.where(heights > 0, np.maximum(np.floor(heights + 0.5), 1), 1).sum()
        )
        assert record["extra"]["total_voxels"] == expected
        assert sum(n for _, n in payload["columns"]) == expected

    def test_lift_shape_mismatch_422(self, service, toy_fields, palette):
        client, _ = service
        small = SemanticField(np.zeros((8, 8), dtype=np.int32), palette)
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(buf, format="PNG")
        response = client.post(
            "/v1/lift",
            json={
                "field_png_b64": png_b64(small),
                "heights_png_b64": base64.b64encode(buf.getvalue()).decode(),
            },
        )
        assert response.status_code == 422


class TestRefineEndpoint:
    def test_refine_flow(self, service, palette):
        client, _ = service
        coarse = np.repeat(np.repeat(np.random.default_rng(0).integers(0, 8, (4, 4)), 8, 0), 8, 1)
        field = SemanticField(coarse.astype(np.int32), palette, "S512")
        response = client.post("/v1/refine", json={"field_png_b64": png_b64(field), "seed": 2})
        assert response.status_code == 202
        record, _ = wait_done(client, response.json()["job_id"], timeout=300)
        assert record["state"] == "done"
        out = load_field_png(
            io.BytesIO(client.get(f"/v1/results/{record['job_id']}").content), palette, "S128"
        )
        assert out.shape == (128, 128)
