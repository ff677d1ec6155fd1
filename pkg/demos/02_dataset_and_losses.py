#!/usr/bin/env python3
"""Build a small dataset from the bundled photos, then price one training
batch through every loss term of both stages (no training, just one
forward pass each)."""

import tempfile
from pathlib import Path

import torch

from sketchface.dataset import BuilderConfig, build_dataset
from sketchface.extractors import RandomConvExtractor
from sketchface.losses import (
    LossWeights,
    calibration_loss,
    isn_total,
    l1_loss,
    lsgan_g_loss,
    perceptual_loss,
    scn_total,
    style_loss,
    tv_loss,
)
from sketchface.models import (
    DiscriminatorSpec,
    GeneratorSpec,
    build_discriminator,
    build_generator,
)
from sketchface.training import SplitTensors

ROOT = Path(__file__).resolve().parent.parent


def main():
    out = Path(tempfile.mkdtemp(prefix="sketchface-demo-"))
    manifest = build_dataset(
        ROOT / "assets" / "fixture_photos", out,
        BuilderConfig(image_size=64, split_ratios=(1.0, 0.0, 0.0)),
    )
    print(f"built {len(manifest.entries)} samples in {out}")

    data = SplitTensors(manifest, "train")
    g1 = build_generator(GeneratorSpec(1, 1, base_width=8), seed=1)
    d1 = build_discriminator(DiscriminatorSpec(1, base_width=8), seed=2)
    g2 = build_generator(GeneratorSpec(1, 3, base_width=8), seed=3)
    extractor = RandomConvExtractor(seed=0)
    weights = LossWeights()

    with torch.no_grad():
        refined = g1(data.sketch)
    refined = refined.requires_grad_(True)

    adv = lsgan_g_loss(d1(refined))
    cal = calibration_loss(d1, refined, data.detail, data.contour, "both")
    stage1 = scn_total(adv, cal, weights)
    print("stage-1 report:", {k: round(v, 4) for k, v in stage1.as_dict().items()})

    with torch.no_grad():
        fake = g2(data.composed)
    stage2 = isn_total(
        l1_loss(data.photo, fake),
        lsgan_g_loss(torch.zeros(4, 1, 4, 4)),
        perceptual_loss(extractor, data.photo, fake),
        style_loss(extractor, data.photo, fake),
        tv_loss(fake),
        weights,
    )
    print("stage-2 report:", {k: round(v, 4) for k, v in stage2.as_dict().items()})
    stage2.verify()
    print("report totals reconstruct from parts: ok")


if __name__ == "__main__":
    main()
