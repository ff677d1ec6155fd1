"""Operator command line: dataset building, training, evaluation, inference, serving.

Every command reads one TOML config file (sections: [dataset], [train],
[eval], [service]); flags override individual values.  Relative paths in a
config resolve against the config file's directory, so a run is
reproducible from the file alone.  The effective configuration is dumped
as ``run_config.resolved`` next to the outputs.  Failures exit nonzero
with a single ``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .buffers import read_edge_map, read_image, write_png
from .dataset import BuilderConfig, DatasetManifest, build_dataset
from .imaging import to_grayscale
from .losses import LossWeights


def _load_config(path: "str | Path | None") -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    path = Path(path)
    with path.open("rb") as fh:
        return tomllib.load(fh), path.parent.resolve()


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    return json.dumps(str(v))


def _dump_resolved(doc: dict, path: Path) -> None:
    lines = []
    for section, values in doc.items():
        lines.append(f"[{section}]")
        for key, v in sorted(values.items()):
            if isinstance(v, dict):
                continue
            lines.append(f"{key} = {_toml_scalar(v)}")
        for key, v in sorted(values.items()):
            if isinstance(v, dict):
                lines.append(f"[{section}.{key}]")
                for k2, v2 in sorted(v.items()):
                    lines.append(f"{k2} = {_toml_scalar(v2)}")
        lines.append("")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines))


def _builder_config(section: dict, base: Path) -> BuilderConfig:
    kwargs = {}
    for name in ("image_size", "seed", "styles", "split_ratios", "canny", "xdog",
                 "photocopy", "contour"):
        if name in section:
            kwargs[name] = section[name]
    if "split_ratios" in kwargs:
        kwargs["split_ratios"] = tuple(kwargs["split_ratios"])
    if "styles" in kwargs:
        kwargs["styles"] = tuple(kwargs["styles"])
    if "styles_dir" in section:
        kwargs["styles_dir"] = _resolve(base, section["styles_dir"])
    return BuilderConfig(**kwargs)


def _train_config(section: dict, base: Path):
    from .training import TrainConfig

    weights = LossWeights(**section.get("weights", {}))
    kwargs = {k: v for k, v in section.items()
              if k not in ("weights", "manifest", "photos", "out_dir")}
    if "out_dir" in section:
        kwargs["out_dir"] = _resolve(base, section["out_dir"])
    return TrainConfig(weights=weights, **kwargs)


def cmd_dataset_build(args) -> int:
    cfg_doc, base = _load_config(args.config)
    section = dict(cfg_doc.get("dataset", {}))
    if args.size:
        section["image_size"] = args.size
    if args.seed is not None:
        section["seed"] = args.seed
    if args.styles:
        section["styles"] = args.styles.split(",")
    photos = _resolve(base, args.photos or section.get("photos", "photos"))
    out = _resolve(base, args.out or section.get("out", "dataset"))
    builder = _builder_config(section, base)
    manifest = build_dataset(photos, out, builder)
    doc = {"dataset": {**section, "photos": str(photos), "out": str(out)}}
    _dump_resolved(doc, out / "run_config.resolved")
    print(f"built {len(manifest.entries)} samples under {out}")
    return 0


def _ensure_manifest(cfg_doc: dict, base: Path, args) -> DatasetManifest:
    train_section = cfg_doc.get("train", {})
    manifest_path = args.manifest or train_section.get("manifest")
    if manifest_path:
        manifest_path = _resolve(base, manifest_path)
        if manifest_path.exists():
            return DatasetManifest.load(manifest_path)
    ds = cfg_doc.get("dataset")
    if not ds:
        raise SystemExit("error: no manifest found and no [dataset] section to build one")
    photos = _resolve(base, ds.get("photos", "photos"))
    out = _resolve(base, ds.get("out", "dataset"))
    if (out / "manifest.json").exists():
        return DatasetManifest.load(out / "manifest.json")
    print(f"manifest missing; building dataset from {photos}")
    return build_dataset(photos, out, _builder_config(ds, base))


def cmd_train(args) -> int:
    from . import training

    cfg_doc, base = _load_config(args.config)
    section = dict(cfg_doc.get("train", {}))
    if args.calibration_mode:
        section["calibration_mode"] = args.calibration_mode
    if args.out:
        section["out_dir"] = args.out
        base_out = Path(args.out)
        if not base_out.is_absolute():
            section["out_dir"] = str(Path.cwd() / base_out)
    if args.seed is not None:
        section["seed"] = args.seed
    cfg = _train_config(section, base)
    manifest = _ensure_manifest(cfg_doc, base, args)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _dump_resolved({"train": cfg.resolved()}, cfg.out_dir / "run_config.resolved")

    if args.stage == "all":
        meta = training.run_pipeline(cfg, manifest)
        print(f"pipeline complete; checkpoints {meta['checkpoints']}")
        return 0
    if args.stage == "scn":
        training.train_scn(cfg, manifest, resume=args.resume)
    elif args.stage == "isn":
        training.train_isn(cfg, manifest, resume=args.resume)
    elif args.stage == "joint":
        scn_state = training.load_train_state(
            _resolve(base, args.scn_state or cfg.out_dir / "states" / "scn_final.pt"),
            cfg, cfg.lr_joint)
        isn_state = training.load_train_state(
            _resolve(base, args.isn_state or cfg.out_dir / "states" / "isn_final.pt"),
            cfg, cfg.lr_joint)
        training.train_joint(cfg, manifest, scn_state, isn_state)
    print(f"stage {args.stage} complete; outputs in {cfg.out_dir}")
    return 0


def cmd_eval(args) -> int:
    from . import metrics

    cfg_doc, base = _load_config(args.config)
    section = dict(cfg_doc.get("eval", {}))
    split = args.split or section.get("split", "test")
    threshold = args.threshold if args.threshold is not None else section.get("threshold", 0.5)
    embedder_kind = args.embedder or section.get("embedder", "random")
    out_path = _resolve(base, args.out or section.get("out", "report.json"))

    manifest = DatasetManifest.load(_resolve(base, args.manifest or section["manifest"]))
    embedder = metrics.make_embedder(embedder_kind)

    if args.self_check:
        from .dataset import load_sample

        ids = manifest.sample_ids(split)
        if not ids:
            raise SystemExit(f"error: split {split!r} is empty")
        photos = [load_sample(manifest, sid).photo for sid in ids]
        report = metrics.evaluate_pairs(photos, photos, embedder)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(report.to_json())
    else:
        report = metrics.evaluate(
            manifest, split,
            _resolve(base, args.scn or section["scn"]),
            _resolve(base, args.isn or section["isn"]),
            embedder=embedder, threshold=threshold, report_path=out_path,
        )
    _dump_resolved(
        {"eval": {"split": split, "threshold": threshold, "embedder": embedder_kind,
                  "out": str(out_path), "self_check": bool(args.self_check)}},
        out_path.parent / "run_config.resolved")
    print(f"psnr={report.psnr_mean:.2f}dB (+{report.psnr_inf_count} inf) "
          f"ssim={report.ssim_mean:.4f} fid={report.fid:.2f} "
          f"precision={report.precision:.4f} recall={report.recall:.4f}")
    return 0


def cmd_infer(args) -> int:
    from .models import forward_isn, forward_scn, load_checkpoint

    sketch_img = read_image(args.sketch)
    if sketch_img.channels == 3:
        sketch_img = to_grayscale(sketch_img)
    plane = sketch_img.convert("unit").plane()
    if args.invert:
        plane = 1.0 - plane
    from .buffers import EdgeMap

    sketch = EdgeMap.from_array(plane, "local_detail")
    g1 = load_checkpoint(args.scn)
    g2 = load_checkpoint(args.isn)
    refined = forward_scn(g1, sketch)
    photo = forward_isn(g2, refined)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_png(photo.convert("unit"), out_dir / "photo.png")
    write_png(refined, out_dir / "refined.png")
    print(f"wrote {out_dir / 'photo.png'} and {out_dir / 'refined.png'}")
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    cfg_doc, base = _load_config(args.config)
    section = dict(cfg_doc.get("service", {}))
    overrides = {}
    if args.scn or "scn_ckpt" in section:
        overrides["scn_ckpt"] = _resolve(base, args.scn or section["scn_ckpt"])
    if args.isn or "isn_ckpt" in section:
        overrides["isn_ckpt"] = _resolve(base, args.isn or section["isn_ckpt"])
    for name in ("host", "port", "max_concurrent", "max_image_dim", "request_timeout"):
        flag = getattr(args, name, None)
        if flag is not None:
            overrides[name] = flag
        elif name in section:
            overrides[name] = section[name]
    config = ServiceConfig.from_env(**overrides)
    serve(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchface",
                                     description="sketch-to-face pipeline operator CLI")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ds = sub.add_parser("dataset", help="dataset operations")
    ds_sub = p_ds.add_subparsers(dest="ds_command", required=True)
    p_build = ds_sub.add_parser("build", help="derive sketches and edge maps from photos")
    p_build.add_argument("--photos", help="directory of RGB photos")
    p_build.add_argument("--out", help="dataset output root")
    p_build.add_argument("--config", help="TOML config with a [dataset] section")
    p_build.add_argument("--size", type=int, help="output image size")
    p_build.add_argument("--seed", type=int)
    p_build.add_argument("--styles", help="comma-separated style ids")
    p_build.set_defaults(func=cmd_dataset_build)

    p_train = sub.add_parser("train", help="run training stages")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--stage", choices=("scn", "isn", "joint", "all"), default="all")
    p_train.add_argument("--calibration-mode", choices=("detail_only", "contour_only", "both"))
    p_train.add_argument("--manifest")
    p_train.add_argument("--out")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--resume")
    p_train.add_argument("--scn-state")
    p_train.add_argument("--isn-state")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate checkpoints over a split")
    p_eval.add_argument("--config")
    p_eval.add_argument("--manifest")
    p_eval.add_argument("--split")
    p_eval.add_argument("--scn")
    p_eval.add_argument("--isn")
    p_eval.add_argument("--out")
    p_eval.add_argument("--threshold", type=float)
    p_eval.add_argument("--embedder", choices=("random", "inception", "auto"))
    p_eval.add_argument("--self-check", action="store_true",
                        help="compare ground-truth photos against themselves")
    p_eval.set_defaults(func=cmd_eval)

    p_infer = sub.add_parser("infer", help="run one sketch through both stages")
    p_infer.add_argument("--sketch", required=True)
    p_infer.add_argument("--scn", required=True)
    p_infer.add_argument("--isn", required=True)
    p_infer.add_argument("--out-dir", default="inference")
    p_infer.add_argument("--invert", action="store_true",
                         help="input is dark-on-light; flip to ink=1")
    p_infer.set_defaults(func=cmd_infer)

    p_serve = sub.add_parser("serve", help="run the HTTP inference service")
    p_serve.add_argument("--config")
    p_serve.add_argument("--scn")
    p_serve.add_argument("--isn")
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    p_serve.add_argument("--max-concurrent", type=int, dest="max_concurrent")
    p_serve.add_argument("--max-image-dim", type=int, dest="max_image_dim")
    p_serve.add_argument("--request-timeout", type=float, dest="request_timeout")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
