#!/usr/bin/env python3
"""Spin the HTTP service up in-process and exercise the JSON API exactly
the way the web UI does: encode a sketch PNG, POST it, decode the photo
and the calibrated sketch from the response."""

import base64
import io
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image

from sketchface.models import GeneratorSpec, build_generator, save_checkpoint
from sketchface.service import ServiceConfig, create_app

OUT = Path(__file__).resolve().parent / "out" / "05"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp(prefix="sketchface-demo-"))
    # untrained tiny models: the transport contract is what this demo shows
    save_checkpoint(build_generator(GeneratorSpec(1, 1, base_width=4, n_res=2), 0), work / "scn.ckpt")
    save_checkpoint(build_generator(GeneratorSpec(1, 3, base_width=4, n_res=2), 1), work / "isn.ckpt")

    app = create_app(ServiceConfig(scn_ckpt=work / "scn.ckpt", isn_ckpt=work / "isn.ckpt"))
    with TestClient(app) as client:
        print("health:", client.get("/healthz").json())

        rng = np.random.default_rng(0)
        arr = np.full((64, 64), 255, dtype=np.uint8)
        arr[20:44, 32] = 0  # a single vertical stroke
        buf = io.BytesIO()
        Image.fromarray(arr, "L").save(buf, format="PNG")
        payload = {
            "sketch": base64.b64encode(buf.getvalue()).decode(),
            "return_intermediate": True,
        }
        res = client.post("/v1/synthesize", json=payload)
        res.raise_for_status()
        doc = res.json()
        print("timings:", {k: round(v, 1) for k, v in doc["timings"].items()})
        Image.open(io.BytesIO(base64.b64decode(doc["photo"]))).save(OUT / "photo.png")
        Image.open(io.BytesIO(base64.b64decode(doc["refined"]))).save(OUT / "refined.png")
        print(f"wrote {OUT}/photo.png and {OUT}/refined.png")


if __name__ == "__main__":
    main()
