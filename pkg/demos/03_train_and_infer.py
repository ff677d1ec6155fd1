#!/usr/bin/env python3
"""Minute-scale end-to-end run: build the fixture dataset, run a shortened
three-stage training, then push one sketch through the trained pipeline
and write the refined sketch plus the synthesized photo.

For the full desk-scale run use the CLI instead:

    sketchface train --config configs/tiny.toml --stage all
"""

import tempfile
from pathlib import Path

from sketchface.buffers import write_png
from sketchface.dataset import BuilderConfig, build_dataset, load_sample
from sketchface.models import forward_isn, forward_scn, load_checkpoint
from sketchface.training import TrainConfig, run_pipeline

ROOT = Path(__file__).resolve().parent.parent
OUT = Path(__file__).resolve().parent / "out" / "03"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp(prefix="sketchface-demo-"))
    manifest = build_dataset(
        ROOT / "assets" / "fixture_photos", work / "data",
        BuilderConfig(image_size=64, split_ratios=(1.0, 0.0, 0.0),
                      contour={"dilate_iterations": 1, "blur_sigma": 1.0}),
    )
    cfg = TrainConfig(
        n1=150, n2=150, n3=30, batch=4, image_size=64,
        g_width=8, d_width=8, d_lr_ratio=1e-6,
        checkpoint_every=10_000, eval_every=50, out_dir=work / "run",
    )
    print("training three stages (a couple of minutes on CPU)...")
    meta = run_pipeline(cfg, manifest)
    print("final checkpoints:", meta["checkpoints"])

    g1 = load_checkpoint(work / "run" / "scn.ckpt")
    g2 = load_checkpoint(work / "run" / "isn.ckpt")
    sample = load_sample(manifest, manifest.sample_ids("train")[0])
    refined = forward_scn(g1, sample.sketch)
    photo = forward_isn(g2, refined)

    write_png(sample.sketch, OUT / "input_sketch.png")
    write_png(refined, OUT / "refined.png")
    write_png(photo.convert("unit"), OUT / "photo.png")
    print(f"wrote sketch/refined/photo triple to {OUT}")


if __name__ == "__main__":
    main()
