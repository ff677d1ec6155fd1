import base64
import io
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from sketchface.models import (
    DiscriminatorSpec,
    GeneratorSpec,
    build_generator,
    save_checkpoint,
)
from sketchface.service import ModelHost, ServiceConfig, create_app


def encode_sketch(size=64, seed=0):
    rng = np.random.default_rng(seed)
    arr = (rng.random((size, size)) * 255).astype(np.uint8)
    img = Image.fromarray(arr, "L")
    out = io.BytesIO()
    img.save(out, format="PNG")
    return base64.b64encode(out.getvalue()).decode()


@pytest.fixture(scope="module")
def checkpoints(tmp_path_factory):
    root = tmp_path_factory.mktemp("ckpts")
    g1 = build_generator(GeneratorSpec(1, 1, base_width=4, n_res=2), seed=0)
    g2 = build_generator(GeneratorSpec(1, 3, base_width=4, n_res=2), seed=1)
    save_checkpoint(g1, root / "scn.ckpt")
    save_checkpoint(g2, root / "isn.ckpt")
    return root


@pytest.fixture(scope="module")
def client(checkpoints):
    config = ServiceConfig(
        scn_ckpt=checkpoints / "scn.ckpt",
        isn_ckpt=checkpoints / "isn.ckpt",
        max_concurrent=4,
        max_image_dim=512,
    )
    app = create_app(config)
    with TestClient(app) as c:
        yield c


class TestSynthesize:
    def test_resolution_contract(self, client):
        body = {"sketch": encode_sketch(64), "return_intermediate": True}
        r = client.post("/v1/synthesize", json=body)
        assert r.status_code == 200
        doc = r.json()
        assert doc["width"] == 64 and doc["height"] == 64
        photo = Image.open(io.BytesIO(base64.b64decode(doc["photo"])))
        assert photo.size == (64, 64) and photo.mode == "RGB"
        refined = Image.open(io.BytesIO(base64.b64decode(doc["refined"])))
        assert refined.size == (64, 64) and refined.mode == "L"
        assert "timings" in doc and doc["timings"]["total_ms"] > 0

    def test_intermediate_optional(self, client):
        r = client.post("/v1/synthesize", json={"sketch": encode_sketch(32)})
        assert r.status_code == 200
        assert "refined" not in r.json()

    def test_deterministic_round_trip(self, client):
        body = {"sketch": encode_sketch(48, seed=3), "return_intermediate": True}
        a = client.post("/v1/synthesize", json=body).json()
        b = client.post("/v1/synthesize", json=body).json()
        assert a["photo"] == b["photo"]
        assert a["refined"] == b["refined"]

    def test_oversized_rejected(self, client):
        r = client.post("/v1/synthesize", json={"sketch": encode_sketch(600)})
        assert r.status_code == 413
        assert "max dimension" in r.json()["detail"]

    def test_undecodable_rejected(self, client):
        r = client.post("/v1/synthesize", json={"sketch": "bm90IGEgcG5n"})
        assert r.status_code == 400

    def test_awkward_size_resized_to_multiple_of_four(self, client):
        r = client.post("/v1/synthesize", json={"sketch": encode_sketch(30)})
        assert r.status_code == 200
        doc = r.json()
        assert doc["width"] % 4 == 0 and doc["height"] % 4 == 0

    def test_concurrent_equals_serial(self, client):
        bodies = [
            {"sketch": encode_sketch(32, seed=s), "return_intermediate": True}
            for s in range(4)
        ]
        serial = [client.post("/v1/synthesize", json=b).json() for b in bodies]
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = list(pool.map(lambda b: client.post("/v1/synthesize", json=b).json(), bodies))
        for s, p in zip(serial, parallel):
            assert s["photo"] == p["photo"]
            assert s["refined"] == p["refined"]


class TestHealth:
    def test_ready_with_digests(self, client):
        doc = client.get("/healthz").json()
        assert doc["status"] == "ready"
        assert set(doc["checkpoints"]) == {"scn", "isn"}
        assert doc["versions"]["api"] == "v1"

    def test_loading_state(self, checkpoints):
        config = ServiceConfig(scn_ckpt=checkpoints / "scn.ckpt", isn_ckpt=checkpoints / "isn.ckpt")
        host = ModelHost(config)
        app = create_app(config, host=host, preload=False)
        with TestClient(app) as c:
            assert c.get("/healthz").json()["status"] == "loading"
            r = c.post("/v1/synthesize", json={"sketch": encode_sketch(16)})
            assert r.status_code == 503

    def test_failed_state_reports_cause(self, tmp_path):
        (tmp_path / "bad.ckpt").write_bytes(b"garbage")
        config = ServiceConfig(scn_ckpt=tmp_path / "bad.ckpt", isn_ckpt=tmp_path / "bad.ckpt")
        app = create_app(config)
        with TestClient(app) as c:
            doc = c.get("/healthz").json()
            assert doc["status"] == "failed"
            assert doc["error"]


def test_config_validation():
    with pytest.raises(ValueError):
        ServiceConfig(max_concurrent=0)
    with pytest.raises(ValueError):
        ServiceConfig(max_image_dim=510)


def test_config_env_overrides(monkeypatch):
    monkeypatch.setenv("SKETCHFACE_PORT", "9001")
    monkeypatch.setenv("SKETCHFACE_MAX_CONCURRENT", "2")
    cfg = ServiceConfig.from_env()
    assert cfg.port == 9001
    assert cfg.max_concurrent == 2
