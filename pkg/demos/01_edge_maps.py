#!/usr/bin/env python3
"""Tour of the deterministic imaging operations.

Takes one bundled fixture photo and walks it through every edge/stroke
operator the dataset builder uses, writing each intermediate to
demos/out/01/ so you can eyeball the whole ground-truth pipeline.
"""

from pathlib import Path

from sketchface.buffers import read_image, write_png
from sketchface.imaging import (
    binarize,
    canny,
    hadamard,
    histogram_equalize,
    photocopy,
    pseudo_contour,
    resize_crop,
    to_grayscale,
    xdog,
)

ROOT = Path(__file__).resolve().parent.parent
OUT = Path(__file__).resolve().parent / "out" / "01"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    photo = read_image(ROOT / "assets" / "fixture_photos" / "face01.png")
    photo = resize_crop(photo, 128, 128)
    write_png(photo, OUT / "photo.png")

    gray = to_grayscale(photo).convert("unit")
    write_png(gray, OUT / "gray.png")

    equalized = histogram_equalize(gray)
    write_png(equalized, OUT / "equalized.png")

    detail = canny(gray)
    write_png(detail, OUT / "detail_canny.png")
    print(f"canny ink fraction: {detail.data.mean():.4f}")

    contour = pseudo_contour(equalized)
    write_png(contour, OUT / "contour.png")

    composed = hadamard(detail, contour)
    write_png(composed, OUT / "composed.png")
    print(f"composed keeps {binarize(composed, 0.5).data.sum():.0f} of "
          f"{detail.data.sum():.0f} detail pixels above 0.5")

    write_png(xdog(gray), OUT / "sketch_xdog.png")
    write_png(photocopy(gray), OUT / "sketch_photocopy.png")
    print(f"wrote all intermediates to {OUT}")


if __name__ == "__main__":
    main()
