"""HTTP inference service: calibrate a sketch and synthesize the photo.

API (versioned path for compatibility):

    POST /v1/synthesize   {"sketch": <base64 PNG>, "return_intermediate": bool}
        -> {"photo": <base64 PNG>, "refined": <base64 PNG, optional>,
            "width": int, "height": int, "timings": {...}}
    GET  /healthz         {"status": "loading|ready|failed", ...}

Inputs are auto-resized to the nearest multiple of 4 (echoed in the
response); inputs over ``max_image_dim`` on either side are rejected.  A
bounded semaphore caps concurrent inference; the loaded models are
immutable, so concurrent responses equal serial ones.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import io
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image
from pydantic import BaseModel

from . import __version__
from .buffers import EdgeMap, ImageBuffer
from .imaging import resize_crop, to_grayscale
from .models import checkpoint_digest, forward_isn, forward_scn, load_checkpoint


@dataclass
class ServiceConfig:
    scn_ckpt: Path = Path("runs/default/scn.ckpt")
    isn_ckpt: Path = Path("runs/default/isn.ckpt")
    host: str = "127.0.0.1"
    port: int = 8077
    max_concurrent: int = 4
    max_image_dim: int = 512
    request_timeout: float = 30.0

    def __post_init__(self):
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        if self.max_image_dim % 4:
            raise ValueError("max_image_dim must be a multiple of 4")
        self.scn_ckpt = Path(self.scn_ckpt)
        self.isn_ckpt = Path(self.isn_ckpt)

    @classmethod
    def from_env(cls, **overrides) -> "ServiceConfig":
        """Environment variables override every field (SKETCHFACE_<FIELD>)."""
        values = dict(overrides)
        for name, cast in (
            ("scn_ckpt", Path), ("isn_ckpt", Path), ("host", str), ("port", int),
            ("max_concurrent", int), ("max_image_dim", int), ("request_timeout", float),
        ):
            env = os.environ.get(f"SKETCHFACE_{name.upper()}")
            if env is not None and name not in values:
                values[name] = cast(env)
        return cls(**values)


@dataclass
class ModelHost:
    """Holds the loaded generators and the service lifecycle state."""

    config: ServiceConfig
    status: str = "loading"
    error: str = ""
    scn = None
    isn = None
    digests: dict = field(default_factory=dict)

    def load(self) -> None:
        try:
            self.scn = load_checkpoint(self.config.scn_ckpt)
            self.isn = load_checkpoint(self.config.isn_ckpt)
            self.digests = {
                "scn": checkpoint_digest(self.config.scn_ckpt),
                "isn": checkpoint_digest(self.config.isn_ckpt),
            }
            self.status = "ready"
        except Exception as exc:
            self.status = "failed"
            self.error = str(exc)


class SynthesizeRequest(BaseModel):
    sketch: str
    return_intermediate: bool = False


def _decode_sketch(b64: str, max_dim: int) -> EdgeMap:
    try:
        raw = base64.b64decode(b64, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
    except (binascii.Error, OSError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"undecodable sketch: {exc}")
    if img.width > max_dim or img.height > max_dim:
        raise HTTPException(
            status_code=413,
            detail=f"input {img.width}x{img.height} exceeds max dimension {max_dim}",
        )
    if img.mode == "L":
        buf = ImageBuffer(np.asarray(img, dtype=np.float32)[:, :, None], "byte")
    else:
        buf = to_grayscale(ImageBuffer(np.asarray(img.convert("RGB"), dtype=np.float32), "byte"))

    def snap(v: int) -> int:
        return int(min(max_dim, max(4, round(v / 4) * 4)))

    out_h, out_w = snap(buf.height), snap(buf.width)
    if (out_h, out_w) != (buf.height, buf.width):
        buf = resize_crop(buf, out_h, out_w)
    unit = buf.convert("unit").plane()
    # Drawings arrive dark-on-light; flip to the internal ink=1 convention.
    return EdgeMap.from_array(1.0 - unit, "local_detail")


def _encode_png(obj) -> str:
    from .buffers import quantize_to_bytes

    buf = obj.base if isinstance(obj, EdgeMap) else obj.convert("unit")
    arr = quantize_to_bytes(buf)
    img = Image.fromarray(arr[:, :, 0], "L") if buf.channels == 1 else Image.fromarray(arr, "RGB")
    out = io.BytesIO()
    img.save(out, format="PNG")
    return base64.b64encode(out.getvalue()).decode()


def create_app(config: ServiceConfig, host: "ModelHost | None" = None,
               preload: bool = True) -> FastAPI:
    app = FastAPI(title="sketch-to-face synthesis service", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    model_host = host or ModelHost(config)
    if preload and model_host.status == "loading":
        model_host.load()
    app.state.host = model_host
    semaphore = asyncio.Semaphore(config.max_concurrent)

    @app.get("/healthz")
    async def healthz():
        return {
            "status": model_host.status,
            "error": model_host.error,
            "checkpoints": model_host.digests,
            "versions": {"api": "v1", "package": __version__},
        }

    def _run_inference(req: SynthesizeRequest) -> dict:
        timings = {}
        t0 = time.perf_counter()
        sketch = _decode_sketch(req.sketch, config.max_image_dim)
        timings["decode_ms"] = (time.perf_counter() - t0) * 1000

        t1 = time.perf_counter()
        refined = forward_scn(model_host.scn, sketch)
        timings["scn_ms"] = (time.perf_counter() - t1) * 1000

        t2 = time.perf_counter()
        photo = forward_isn(model_host.isn, refined)
        timings["isn_ms"] = (time.perf_counter() - t2) * 1000

        t3 = time.perf_counter()
        body = {
            "photo": _encode_png(photo),
            "width": photo.width,
            "height": photo.height,
        }
        if req.return_intermediate:
            body["refined"] = _encode_png(refined)
        timings["encode_ms"] = (time.perf_counter() - t3) * 1000
        timings["total_ms"] = (time.perf_counter() - t0) * 1000
        body["timings"] = timings
        return body

    @app.post("/v1/synthesize")
    async def synthesize(req: SynthesizeRequest):
        if model_host.status != "ready":
            raise HTTPException(status_code=503, detail=f"models not ready: {model_host.status}")
        try:
            await asyncio.wait_for(semaphore.acquire(), timeout=config.request_timeout)
        except asyncio.TimeoutError:
            raise HTTPException(status_code=503, detail="server saturated; retry later")
        try:
            return await asyncio.to_thread(_run_inference, req)
        finally:
            semaphore.release()

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
