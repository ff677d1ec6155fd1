"""Training corpus: builder, on-disk layout, manifest, loader, batching.

Layout under the dataset root::

    photos/<sample_id>.png            resized photo (8-bit RGB)
    sketches/<style_id>/<sample_id>.png   poorly-drawn input sketch
    detail/<sample_id>.png            thin binary edges of the photo
    contour/<sample_id>.png           soft thick contours of the equalized photo
    manifest.json                     {version, seed, root, entries}

One manifest entry per (photo, style) pair; sample ids are
``<photo stem>--<style_id>``.  Styles synthesized internally: ``xdog`` and
``photocopy``.  Styles produced by external tools (``photo_sketch_import``,
``fdog_import``) are ingested from ``<styles_dir>/<style_id>/<stem>.png``
when such a file exists.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import imaging
from .buffers import (
    EdgeMap,
    ImageBuffer,
    read_edge_map,
    read_image,
    snap_to_byte_grid,
    write_png,
)

log = logging.getLogger(__name__)

INTERNAL_STYLES = ("xdog", "photocopy")
IMPORT_STYLES = ("photo_sketch_import", "fdog_import")
ALL_STYLES = INTERNAL_STYLES + IMPORT_STYLES
SPLITS = ("train", "val", "test")

MANIFEST_VERSION = 1


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    style_id: str
    split: str


@dataclass
class DatasetManifest:
    root: Path
    seed: int
    entries: list[ManifestEntry]

    def sample_ids(self, split: str | None = None) -> list[str]:
        return [e.sample_id for e in self.entries if split is None or e.split == split]

    def entry(self, sample_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.sample_id == sample_id:
                return e
        raise DatasetError(f"sample id {sample_id!r} not in manifest")

    def to_json(self) -> str:
        doc = {
            "version": MANIFEST_VERSION,
            "seed": self.seed,
            "root": str(self.root),
            "entries": [
                {"sample_id": e.sample_id, "style_id": e.style_id, "split": e.split}
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path: "str | Path | None" = None) -> Path:
        path = Path(path) if path else self.root / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: "str | Path") -> "DatasetManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        entries = [
            ManifestEntry(d["sample_id"], d["style_id"], d["split"])
            for d in doc["entries"]
        ]
        root = Path(doc["root"])
        if not root.is_absolute():
            root = path.parent / root
        return cls(root=root, seed=int(doc["seed"]), entries=entries)

    def validate(self) -> None:
        seen = set()
        for e in self.entries:
            if e.sample_id in seen:
                raise DatasetError(f"duplicate sample id {e.sample_id}")
            seen.add(e.sample_id)
            if e.split not in SPLITS:
                raise DatasetError(f"bad split {e.split!r}")
            for p in sample_paths(self, e):
                if not p.exists():
                    raise DatasetError(f"missing file {p}")


@dataclass(frozen=True)
class TrainingSample:
    """One training quadruple; all four rasters share the same H x W."""

    photo: ImageBuffer  # 3ch, signed range
    sketch: EdgeMap  # poorly-drawn input
    detail: EdgeMap  # thin binary edges (local_detail)
    contour: EdgeMap  # soft thick contours (global_contour)
    style_id: str
    sample_id: str

    def validate(self) -> None:
        shape = (self.photo.height, self.photo.width)
        for name, m in (("sketch", self.sketch), ("detail", self.detail), ("contour", self.contour)):
            if (m.height, m.width) != shape:
                raise DatasetError(f"{name} shape {m.height}x{m.width} != photo {shape}")
        if self.photo.range_tag != "signed" or self.photo.channels != 3:
            raise DatasetError("photo must be 3-channel signed range")
        if self.style_id not in ALL_STYLES:
            raise DatasetError(f"unknown style {self.style_id!r}")


@dataclass
class BuilderConfig:
    image_size: int = 256
    styles: Sequence[str] = INTERNAL_STYLES
    styles_dir: Path | None = None  # default: <photo_dir>/../styles
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    canny: dict = field(default_factory=lambda: dict(imaging.CANNY_DEFAULTS))
    xdog: dict = field(default_factory=lambda: dict(imaging.XDOG_DEFAULTS))
    photocopy: dict = field(default_factory=lambda: dict(imaging.PHOTOCOPY_DEFAULTS))
    contour: dict = field(default_factory=lambda: dict(imaging.CONTOUR_DEFAULTS))


def _split_hash(seed: int, sample_id: str) -> str:
    return hashlib.sha256(f"{seed}:{sample_id}".encode()).hexdigest()


def assign_splits(
    sample_ids: Sequence[str], seed: int, ratios: tuple[float, float, float]
) -> dict[str, str]:
    """Deterministic partition: rank ids by seeded hash, then cut by ratio."""
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise DatasetError(f"split ratios must sum to 1, got {ratios}")
    ranked = sorted(sample_ids, key=lambda s: _split_hash(seed, s))
    n = len(ranked)
    n_train = math.floor(ratios[0] * n)
    n_val = math.floor(ratios[1] * n)
    out = {}
    for i, sid in enumerate(ranked):
        if i < n_train:
            out[sid] = "train"
        elif i < n_train + n_val:
            out[sid] = "val"
        else:
            out[sid] = "test"
    return out


def sample_paths(manifest: DatasetManifest, entry: ManifestEntry) -> list[Path]:
    root = manifest.root
    return [
        root / "photos" / f"{entry.sample_id}.png",
        root / "sketches" / entry.style_id / f"{entry.sample_id}.png",
        root / "detail" / f"{entry.sample_id}.png",
        root / "contour" / f"{entry.sample_id}.png",
    ]


def _synthesize_sketch(gray: ImageBuffer, style: str, cfg: BuilderConfig) -> EdgeMap:
    if style == "xdog":
        return imaging.xdog(gray, **cfg.xdog)
    if style == "photocopy":
        return imaging.photocopy(gray, **cfg.photocopy)
    raise DatasetError(f"style {style!r} is not synthesized internally")


def _import_sketch(path: Path, size: int) -> EdgeMap:
    raw = read_image(path)
    if raw.channels == 3:
        raw = imaging.to_grayscale(raw)
    resized = imaging.resize_crop(raw, size, size).convert("unit")
    # External tools draw dark strokes on light paper; flip to ink=1.
    return EdgeMap.from_array(1.0 - resized.plane(), "local_detail")


def build_dataset(photo_dir: "str | Path", out_root: "str | Path", cfg: BuilderConfig | None = None) -> DatasetManifest:
    """Derive photos, sketches, and ground-truth edge maps for every input photo.

    Unreadable inputs are skipped with a warning; zero usable photos is an
    error.  Same inputs + same seed produce a byte-identical manifest.
    """
    cfg = cfg or BuilderConfig()
    photo_dir = Path(photo_dir)
    out_root = Path(out_root)
    styles_dir = Path(cfg.styles_dir) if cfg.styles_dir else photo_dir.parent / "styles"

    photo_files = sorted(
        p for p in photo_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    entries: list[ManifestEntry] = []
    n_ok = 0
    for path in photo_files:
        try:
            raw = read_image(path)
            if raw.channels != 3:
                raise DatasetError("expected an RGB photo")
        except Exception as exc:  # unreadable or wrong kind: skip, keep going
            log.warning("skipping %s: %s", path.name, exc)
            continue
        n_ok += 1
        stem = path.stem

        photo = snap_to_byte_grid(imaging.resize_crop(raw, cfg.image_size, cfg.image_size))
        gray = imaging.to_grayscale(photo).convert("unit")
        detail = imaging.canny(gray, **cfg.canny)
        contour = imaging.pseudo_contour(imaging.histogram_equalize(gray), **cfg.contour)

        for style in cfg.styles:
            if style in INTERNAL_STYLES:
                sketch = _synthesize_sketch(gray, style, cfg)
            else:
                src = styles_dir / style / f"{stem}.png"
                if not src.exists():
                    continue
                sketch = _import_sketch(src, cfg.image_size)
            sid = f"{stem}--{style}"
            write_png(photo, out_root / "photos" / f"{sid}.png")
            write_png(sketch, out_root / "sketches" / style / f"{sid}.png")
            write_png(detail, out_root / "detail" / f"{sid}.png")
            write_png(contour, out_root / "contour" / f"{sid}.png")
            entries.append(ManifestEntry(sid, style, "train"))

    if n_ok == 0 or not entries:
        raise DatasetError(f"no usable photos under {photo_dir}")

    split_of = assign_splits([e.sample_id for e in entries], cfg.seed, tuple(cfg.split_ratios))
    entries = [ManifestEntry(e.sample_id, e.style_id, split_of[e.sample_id]) for e in entries]
    entries.sort(key=lambda e: e.sample_id)
    manifest = DatasetManifest(root=out_root, seed=cfg.seed, entries=entries)
    manifest.save()
    return manifest


def load_sample(manifest: DatasetManifest, sample_id: str) -> TrainingSample:
    entry = manifest.entry(sample_id)
    photo_p, sketch_p, detail_p, contour_p = sample_paths(manifest, entry)
    for p in (photo_p, sketch_p, detail_p, contour_p):
        if not p.exists():
            raise DatasetError(f"missing file {p}")
    sample = TrainingSample(
        photo=read_image(photo_p).convert("signed"),
        sketch=read_edge_map(sketch_p, "local_detail"),
        detail=read_edge_map(detail_p, "local_detail"),
        contour=read_edge_map(contour_p, "global_contour"),
        style_id=entry.style_id,
        sample_id=sample_id,
    )
    sample.validate()
    return sample


def batch_iterator(
    manifest: DatasetManifest,
    split: str,
    batch: int,
    seed: int,
    epochs: int = 1,
    start_epoch: int = 0,
) -> Iterator[list[TrainingSample]]:
    """Epoch-shuffled batches; the last short batch of an epoch is kept.

    Shuffling is a pure function of (seed, epoch), so iteration order is
    reproducible and resumable from any epoch boundary.
    """
    if batch < 1:
        raise DatasetError("batch size must be >= 1")
    ids = manifest.sample_ids(split)
    if not ids:
        raise DatasetError(f"split {split!r} is empty")
    for epoch in range(start_epoch, start_epoch + epochs):
        rng = np.random.default_rng([seed, epoch])
        order = rng.permutation(len(ids))
        for i in range(0, len(ids), batch):
            chunk = order[i : i + batch]
            yield [load_sample(manifest, ids[j]) for j in chunk]
