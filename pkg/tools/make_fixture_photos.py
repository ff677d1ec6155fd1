#!/usr/bin/env python3
"""Generate the bundled synthetic face photos used by tests and demos.

Run once from the repo root; output is committed under assets/fixture_photos.
The faces are deliberately simple (bright background, dark features) so that
edge extraction and the sketch stylizers produce meaningful maps.
"""

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

OUT = Path(__file__).resolve().parent.parent / "assets" / "fixture_photos"
SIZE = 96

FACES = [
    # skin, hair, eye_dy, mouth_w, head_w, head_h
    ((236, 208, 186), (72, 48, 28), 0, 22, 62, 74),
    ((224, 189, 162), (32, 28, 26), 2, 16, 56, 70),
    ((244, 219, 196), (120, 86, 40), -2, 26, 66, 78),
    ((230, 198, 170), (48, 40, 44), 1, 20, 58, 82),
]


def draw_face(skin, hair, eye_dy, mouth_w, head_w, head_h):
    img = Image.new("RGB", (SIZE, SIZE), (247, 247, 244))
    d = ImageDraw.Draw(img)
    cx, cy = SIZE // 2, SIZE // 2 + 4

    # hair cap behind the head
    d.ellipse(
        [cx - head_w // 2 - 4, cy - head_h // 2 - 10, cx + head_w // 2 + 4, cy + 6],
        fill=hair,
    )
    # head
    d.ellipse(
        [cx - head_w // 2, cy - head_h // 2, cx + head_w // 2, cy + head_h // 2],
        fill=skin,
        outline=(96, 72, 60),
        width=2,
    )
    # eyes and brows
    ey = cy - 8 + eye_dy
    for ex in (cx - 13, cx + 13):
        d.ellipse([ex - 5, ey - 3, ex + 5, ey + 3], fill=(250, 250, 250), outline=(60, 50, 45))
        d.ellipse([ex - 2, ey - 2, ex + 2, ey + 2], fill=(40, 30, 28))
        d.line([ex - 6, ey - 8, ex + 6, ey - 9], fill=(70, 52, 40), width=2)
    # nose
    d.line([cx, ey + 3, cx - 3, cy + 8], fill=(140, 105, 88), width=2)
    d.line([cx - 3, cy + 8, cx + 2, cy + 9], fill=(140, 105, 88), width=2)
    # mouth
    my = cy + 18
    d.arc([cx - mouth_w // 2, my - 4, cx + mouth_w // 2, my + 6], 10, 170, fill=(150, 60, 60), width=3)
    return img


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240809)
    for i, params in enumerate(FACES, start=1):
        img = draw_face(*params)
        # mild deterministic texture so gradients aren't perfectly flat
        arr = np.asarray(img, dtype=np.float32)
        noise = rng.normal(0.0, 2.0, size=arr.shape).astype(np.float32)
        arr = np.clip(arr + noise, 0, 255).astype(np.uint8)
        Image.fromarray(arr).save(OUT / f"face{i:02d}.png")
        print("wrote", OUT / f"face{i:02d}.png")


if __name__ == "__main__":
    main()
