"""Raster containers and PNG I/O.

Every raster moving through the pipeline is an :class:`ImageBuffer`: an
H x W x C float32 array plus a declared value range.  Edge/stroke maps are
single-channel unit-range buffers wrapped in :class:`EdgeMap`, which also
records what the map represents (thin detail edges, thick soft contours,
or a composition of the two).

Ink convention: 1.0 = stroke present, 0.0 = background.  Stylizers that
naturally produce dark-on-light output invert before constructing an
EdgeMap, so the rest of the pipeline never sees the flipped convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

RANGE_BOUNDS = {
    "unit": (0.0, 1.0),
    "signed": (-1.0, 1.0),
    "byte": (0.0, 255.0),
}

EDGE_KINDS = ("local_detail", "global_contour", "composed")

# Slack for float32 round-off when validating declared ranges.
_RANGE_EPS = 1e-4


class ContractViolation(ValueError):
    """An input broke a documented precondition."""


@dataclass(frozen=True)
class ImageBuffer:
    """H x W x C float32 raster with a declared value range.

    channels must be 1 or 3; every sample must lie inside the declared
    range (up to float round-off).
    """

    data: np.ndarray
    range_tag: str = "unit"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ContractViolation(f"expected H x W x C array, got shape {data.shape}")
        h, w, c = data.shape
        if c not in (1, 3):
            raise ContractViolation(f"channels must be 1 or 3, got {c}")
        if h <= 0 or w <= 0:
            raise ContractViolation(f"degenerate dimensions {h}x{w}")
        if self.range_tag not in RANGE_BOUNDS:
            raise ContractViolation(f"unknown range tag {self.range_tag!r}")
        lo, hi = RANGE_BOUNDS[self.range_tag]
        span = hi - lo
        if not np.isfinite(data).all():
            raise ContractViolation("non-finite samples")
        if data.min() < lo - _RANGE_EPS * span or data.max() > hi + _RANGE_EPS * span:
            raise ContractViolation(
                f"samples [{data.min():.4f}, {data.max():.4f}] outside "
                f"declared {self.range_tag} range [{lo}, {hi}]"
            )
        data = np.clip(data, lo, hi)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def convert(self, range_tag: str) -> "ImageBuffer":
        """Linear remap to another declared range (exact up to float eps)."""
        if range_tag == self.range_tag:
            return self
        lo0, hi0 = RANGE_BOUNDS[self.range_tag]
        lo1, hi1 = RANGE_BOUNDS[range_tag]
        scaled = (self.data.astype(np.float64) - lo0) / (hi0 - lo0) * (hi1 - lo1) + lo1
        return ImageBuffer(np.clip(scaled, lo1, hi1).astype(np.float32), range_tag)

    def plane(self) -> np.ndarray:
        """2-D view of a single-channel buffer."""
        if self.channels != 1:
            raise ContractViolation("plane() requires a single-channel buffer")
        return self.data[:, :, 0]


@dataclass(frozen=True)
class EdgeMap:
    """Single-channel unit-range stroke map (ink=1, background=0)."""

    base: ImageBuffer
    kind: str = "local_detail"

    def __post_init__(self):
        if self.base.channels != 1:
            raise ContractViolation("EdgeMap must be single-channel")
        if self.base.range_tag != "unit":
            raise ContractViolation("EdgeMap must use the unit range")
        if self.kind not in EDGE_KINDS:
            raise ContractViolation(f"unknown edge map kind {self.kind!r}")

    @classmethod
    def from_array(cls, arr: np.ndarray, kind: str = "local_detail") -> "EdgeMap":
        return cls(ImageBuffer(np.asarray(arr, dtype=np.float32), "unit"), kind)

    @property
    def data(self) -> np.ndarray:
        """2-D H x W view."""
        return self.base.plane()

    @property
    def height(self) -> int:
        return self.base.height

    @property
    def width(self) -> int:
        return self.base.width


def quantize_to_bytes(buf: ImageBuffer) -> np.ndarray:
    """8-bit rendering of a buffer (rounding, not truncation)."""
    byte = buf.convert("byte").data
    return np.clip(np.rint(byte), 0, 255).astype(np.uint8)


def snap_to_byte_grid(buf: ImageBuffer) -> ImageBuffer:
    """Quantize samples to the 8-bit grid but keep the byte float range.

    Guarantees that writing the buffer to PNG and reading it back is an
    exact round trip.
    """
    return ImageBuffer(quantize_to_bytes(buf).astype(np.float32), "byte")


def write_png(obj: "ImageBuffer | EdgeMap", path: "str | Path") -> None:
    """Write a buffer as 8-bit PNG (grayscale for 1ch, RGB for 3ch)."""
    buf = obj.base if isinstance(obj, EdgeMap) else obj
    arr = quantize_to_bytes(buf)
    if buf.channels == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        img = Image.fromarray(arr, mode="RGB")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def read_image(path: "str | Path") -> ImageBuffer:
    """Read a PNG/JPEG as a byte-range buffer (L kept 1ch, anything else RGB)."""
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.float32)[:, :, None]
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return ImageBuffer(arr, "byte")


def read_edge_map(path: "str | Path", kind: str = "local_detail") -> EdgeMap:
    """Read an 8-bit grayscale PNG as a unit-range edge map."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
    return EdgeMap.from_array(arr, kind)
