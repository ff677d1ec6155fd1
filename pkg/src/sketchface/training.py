"""Three-stage training schedule.

Stage 1 trains the stroke calibration generator against its patch
discriminator (adversarial + feature-matching calibration loss).  Stage 2
trains the synthesis generator on the product of the two ground-truth edge
maps with photo supervision (L1 + adversarial + perceptual + style + TV).
Stage 3 fine-tunes both generators end to end at a reduced learning rate,
with synthesis gradients flowing back into the calibration generator.

Discriminators always train at ``d_lr_ratio`` times the generator rate.
Fixed step budgets bound each stage; an optional early stop ends a stage
when its guide term stops improving for a number of evaluation points.
All logging is timestamp-free JSONL so reruns with equal seeds produce
byte-identical logs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .buffers import ContractViolation
from .dataset import DatasetManifest
from .extractors import make_extractor
from .losses import (
    LossWeights,
    calibration_loss,
    isn_total,
    l1_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    perceptual_loss,
    scn_total,
    style_loss,
    tv_loss,
)
from .models import (
    Discriminator,
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    save_checkpoint,
)

STATE_VERSION = 1
ADAM_BETAS = (0.5, 0.999)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    n1: int = 50_000
    n2: int = 50_000
    n3: int = 20_000
    lr_stage12: float = 1e-4
    lr_joint: float = 1e-5
    d_lr_ratio: float = 0.1
    batch: int = 8
    image_size: int = 256
    weights: LossWeights = field(default_factory=LossWeights)
    calibration_mode: str = "both"
    scn_real_target: str = "detail"  # ground truth the stage-1 D sees as real
    seed: int = 0
    data_seed: int = 0
    g_width: int = 64
    d_width: int = 64
    extractor: str = "random"
    extractor_seed: int = 0
    split: str = "train"
    checkpoint_every: int = 1000
    log_every: int = 1
    eval_every: int = 100
    early_stop: bool = False
    early_stop_patience: int = 5
    out_dir: Path = Path("runs/default")

    def __post_init__(self):
        if self.lr_stage12 <= 0 or self.lr_joint <= 0:
            raise ContractViolation("learning rates must be positive")
        if self.d_lr_ratio < 0:
            raise ContractViolation("d_lr_ratio must be >= 0 (0 freezes discriminators)")
        if min(self.n1, self.n2, self.n3) < 0 or self.batch < 1:
            raise ContractViolation("budgets must be >= 0 and batch >= 1")
        if self.calibration_mode not in ("detail_only", "contour_only", "both"):
            raise ContractViolation(f"bad calibration mode {self.calibration_mode!r}")
        if self.scn_real_target not in ("detail", "contour", "mixed"):
            raise ContractViolation(f"bad scn real target {self.scn_real_target!r}")
        self.out_dir = Path(self.out_dir)

    def resolved(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["out_dir"] = str(self.out_dir)
        return doc

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.resolved(), sort_keys=True).encode()
        ).hexdigest()[:16]


@dataclass
class TrainState:
    stage: str
    step: int
    generator: Generator
    discriminator: Discriminator
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    history: list[dict] = field(default_factory=list)


class SplitTensors:
    """A manifest split preloaded as signed-range training tensors.

    With ``load_sketch=False`` the poorly-drawn sketch files are never even
    opened; stage 2 trains on the composed ground-truth maps alone.
    """

    def __init__(self, manifest: DatasetManifest, split: str, load_sketch: bool = True):
        from .buffers import read_edge_map, read_image
        from .dataset import sample_paths

        ids = manifest.sample_ids(split)
        if not ids:
            raise ContractViolation(f"split {split!r} is empty")
        self.ids = ids
        sketches, details, contours, photos, composed = [], [], [], [], []
        for sid in ids:
            photo_p, sketch_p, detail_p, contour_p = sample_paths(manifest, manifest.entry(sid))
            if load_sketch:
                sketch = read_edge_map(sketch_p).data
                sketches.append(torch.from_numpy(sketch.copy()))
            detail = read_edge_map(detail_p).data
            contour = read_edge_map(contour_p, "global_contour").data
            details.append(torch.from_numpy(detail.copy()))
            contours.append(torch.from_numpy(contour.copy()))
            composed.append(torch.from_numpy((detail * contour).copy()))
            photo = read_image(photo_p).convert("signed").data
            photos.append(torch.from_numpy(photo.copy()).permute(2, 0, 1))
        to_signed = lambda chunks: torch.stack(chunks).unsqueeze(1) * 2.0 - 1.0
        self.sketch = to_signed(sketches) if load_sketch else None
        self.detail = to_signed(details)
        self.contour = to_signed(contours)
        self.composed = to_signed(composed)
        self.photo = torch.stack(photos)

    def __len__(self) -> int:
        return len(self.ids)


def _epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def _batch_indices(n: int, batch: int, seed: int, global_batch: int) -> np.ndarray:
    """Indices of the k-th batch in the epoch-shuffled stream."""
    per_epoch = math.ceil(n / batch)
    epoch, slot = divmod(global_batch, per_epoch)
    order = _epoch_order(n, seed, epoch)
    return order[slot * batch : slot * batch + batch]


class _JsonlLog:
    def __init__(self, path: Path):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _check_finite(report_terms: dict, stage: str, step: int, out_dir: Path, gen, disc):
    if all(math.isfinite(v) for v in report_terms.values()):
        return
    snap = out_dir / f"diverged_{stage}_{step}"
    snap.mkdir(parents=True, exist_ok=True)
    save_checkpoint(gen, snap / "generator.ckpt")
    save_checkpoint(disc, snap / "discriminator.ckpt")
    raise TrainingDiverged(
        f"non-finite loss at {stage} step {step}: {report_terms}; snapshot in {snap}"
    )


class _EarlyStop:
    def __init__(self, enabled: bool, patience: int):
        self.enabled = enabled
        self.patience = patience
        self.best = math.inf
        self.misses = 0

    def update(self, value: float) -> bool:
        """Returns True when the stage should stop."""
        if not self.enabled:
            return False
        if value < self.best:
            self.best = value
            self.misses = 0
        else:
            self.misses += 1
        return self.misses >= self.patience


def _make_optimizers(gen, disc, lr: float, d_lr_ratio: float):
    opt_g = torch.optim.Adam(gen.parameters(), lr=lr, betas=ADAM_BETAS)
    opt_d = torch.optim.Adam(disc.parameters(), lr=lr * d_lr_ratio, betas=ADAM_BETAS)
    return opt_g, opt_d


def save_train_state(state: TrainState, cfg: TrainConfig, path: "str | Path") -> None:
    payload = {
        "version": STATE_VERSION,
        "stage": state.stage,
        "step": state.step,
        "g_spec": dataclasses.asdict(state.generator.spec),
        "g_seed": state.generator.seed,
        "d_spec": dataclasses.asdict(state.discriminator.spec),
        "d_seed": state.discriminator.seed,
        "g_state": state.generator.state_dict(),
        "d_state": state.discriminator.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "torch_rng": torch.get_rng_state(),
        "history": state.history,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_train_state(path: "str | Path", cfg: TrainConfig, lr: float) -> TrainState:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != STATE_VERSION:
        raise ContractViolation(f"unsupported train state version {payload.get('version')}")
    gen = Generator(GeneratorSpec(**payload["g_spec"]), payload["g_seed"])
    gen.load_state_dict(payload["g_state"])
    disc = Discriminator(DiscriminatorSpec(**payload["d_spec"]), payload["d_seed"])
    disc.load_state_dict(payload["d_state"])
    opt_g, opt_d = _make_optimizers(gen, disc, lr, cfg.d_lr_ratio)
    opt_g.load_state_dict(payload["opt_g"])
    opt_d.load_state_dict(payload["opt_d"])
    torch.set_rng_state(payload["torch_rng"])
    return TrainState(payload["stage"], payload["step"], gen, disc, opt_g, opt_d,
                      payload["history"])


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def _scn_d_loss(disc, refined_detached, detail, contour, cfg: TrainConfig):
    """Stage-1 discriminator objective for the configured real target.

    ``mixed`` treats both ground-truth components as real samples, matching
    the reading that real data is drawn from the whole ground-truth edge
    set rather than one component.
    """
    labels = cfg.weights.lsgan_labels[:2]
    fake = disc(refined_detached)
    if cfg.scn_real_target == "mixed":
        return 0.5 * (lsgan_d_loss(disc(detail), fake, labels=labels)
                      + lsgan_d_loss(disc(contour), fake, labels=labels))
    real = detail if cfg.scn_real_target == "detail" else contour
    return lsgan_d_loss(disc(real), fake, labels=labels)


def _scn_step(gen, disc, opt_g, opt_d, batch, cfg: TrainConfig):
    """One alternating update: discriminator first, then the generator
    against the frozen (just-updated) discriminator."""
    sketch, detail, contour = batch
    refined = gen(sketch)

    d_loss = _scn_d_loss(disc, refined.detach(), detail, contour, cfg)
    opt_d.zero_grad(set_to_none=True)
    d_loss.backward()
    opt_d.step()

    _set_requires_grad(disc, False)
    adv = lsgan_g_loss(disc(refined), target=cfg.weights.lsgan_labels[2])
    cal = calibration_loss(disc, refined, detail, contour, cfg.calibration_mode)
    report = scn_total(adv, cal, cfg.weights)
    opt_g.zero_grad(set_to_none=True)
    report.total_tensor.backward()
    opt_g.step()
    _set_requires_grad(disc, True)
    return d_loss, report


def _isn_step(gen, disc, extractor, opt_g, opt_d, batch, cfg: TrainConfig):
    source, photo = batch
    fake = gen(source)

    d_loss = lsgan_d_loss(disc(photo), disc(fake.detach()),
                          labels=cfg.weights.lsgan_labels[:2])
    opt_d.zero_grad(set_to_none=True)
    d_loss.backward()
    opt_d.step()

    _set_requires_grad(disc, False)
    adv = lsgan_g_loss(disc(fake), target=cfg.weights.lsgan_labels[2])
    report = isn_total(
        l1_loss(photo, fake),
        adv,
        perceptual_loss(extractor, photo, fake),
        style_loss(extractor, photo, fake),
        tv_loss(fake),
        cfg.weights,
    )
    opt_g.zero_grad(set_to_none=True)
    report.total_tensor.backward()
    opt_g.step()
    _set_requires_grad(disc, True)
    return d_loss, report


def train_scn(cfg: TrainConfig, manifest: DatasetManifest,
              resume: "str | Path | None" = None) -> TrainState:
    """Stage 1: alternate discriminator/generator updates on sketch batches."""
    torch.manual_seed(cfg.seed)
    data = SplitTensors(manifest, cfg.split)
    log = _JsonlLog(cfg.out_dir / "metrics.jsonl")

    if resume:
        state = load_train_state(resume, cfg, cfg.lr_stage12)
    else:
        gen = build_generator(GeneratorSpec(1, 1, base_width=cfg.g_width), cfg.seed + 1)
        disc = build_discriminator(DiscriminatorSpec(1, base_width=cfg.d_width), cfg.seed + 2)
        opt_g, opt_d = _make_optimizers(gen, disc, cfg.lr_stage12, cfg.d_lr_ratio)
        state = TrainState("scn", 0, gen, disc, opt_g, opt_d)

    stopper = _EarlyStop(cfg.early_stop, cfg.early_stop_patience)
    window: list[float] = []
    for step in range(state.step + 1, cfg.n1 + 1):
        idx = torch.from_numpy(_batch_indices(len(data), cfg.batch, cfg.data_seed, step - 1))
        batch = (data.sketch[idx], data.detail[idx], data.contour[idx])
        d_loss, report = _scn_step(state.generator, state.discriminator,
                                   state.opt_g, state.opt_d, batch, cfg)
        state.step = step

        terms = dict(report.terms, d=float(d_loss.detach()), total=report.total)
        _check_finite(terms, "scn", step, cfg.out_dir, state.generator, state.discriminator)
        window.append(report.terms["calibration"])
        if step % cfg.log_every == 0 or step == cfg.n1:
            log.append({"stage": "scn", "step": step, "lr": cfg.lr_stage12, **terms})
        if step % cfg.checkpoint_every == 0:
            save_train_state(state, cfg, cfg.out_dir / "states" / f"scn_{step}.pt")
        if step % cfg.eval_every == 0:
            guide = float(np.mean(window))
            window.clear()
            log.append({"stage": "scn", "step": step, "eval_guide": guide})
            if stopper.update(guide):
                log.append({"stage": "scn", "step": step, "early_stop": True})
                break

    save_train_state(state, cfg, cfg.out_dir / "states" / "scn_final.pt")
    save_checkpoint(state.generator, cfg.out_dir / "scn.ckpt")
    save_checkpoint(state.discriminator, cfg.out_dir / "scn_d.ckpt")
    return state


def train_isn(cfg: TrainConfig, manifest: DatasetManifest,
              resume: "str | Path | None" = None) -> TrainState:
    """Stage 2: synthesis training on composed ground-truth maps vs photos.

    Never touches the poorly-drawn sketches; its input is the elementwise
    product of the detail and contour maps.
    """
    torch.manual_seed(cfg.seed + 100)
    data = SplitTensors(manifest, cfg.split, load_sketch=False)
    log = _JsonlLog(cfg.out_dir / "metrics.jsonl")
    extractor = make_extractor(cfg.extractor, in_channels=3, seed=cfg.extractor_seed)

    if resume:
        state = load_train_state(resume, cfg, cfg.lr_stage12)
    else:
        gen = build_generator(GeneratorSpec(1, 3, base_width=cfg.g_width), cfg.seed + 3)
        disc = build_discriminator(DiscriminatorSpec(3, base_width=cfg.d_width), cfg.seed + 4)
        opt_g, opt_d = _make_optimizers(gen, disc, cfg.lr_stage12, cfg.d_lr_ratio)
        state = TrainState("isn", 0, gen, disc, opt_g, opt_d)

    stopper = _EarlyStop(cfg.early_stop, cfg.early_stop_patience)
    window: list[float] = []
    for step in range(state.step + 1, cfg.n2 + 1):
        idx = torch.from_numpy(_batch_indices(len(data), cfg.batch, cfg.data_seed, step - 1))
        batch = (data.composed[idx], data.photo[idx])
        d_loss, report = _isn_step(state.generator, state.discriminator, extractor,
                                   state.opt_g, state.opt_d, batch, cfg)
        state.step = step

        terms = dict(report.terms, d=float(d_loss.detach()), total=report.total)
        _check_finite(terms, "isn", step, cfg.out_dir, state.generator, state.discriminator)
        window.append(report.terms["l1"])
        if step % cfg.log_every == 0 or step == cfg.n2:
            log.append({"stage": "isn", "step": step, "lr": cfg.lr_stage12, **terms})
        if step % cfg.checkpoint_every == 0:
            save_train_state(state, cfg, cfg.out_dir / "states" / f"isn_{step}.pt")
        if step % cfg.eval_every == 0:
            guide = float(np.mean(window))
            window.clear()
            log.append({"stage": "isn", "step": step, "eval_guide": guide})
            if stopper.update(guide):
                log.append({"stage": "isn", "step": step, "early_stop": True})
                break

    save_train_state(state, cfg, cfg.out_dir / "states" / "isn_final.pt")
    save_checkpoint(state.generator, cfg.out_dir / "isn.ckpt")
    save_checkpoint(state.discriminator, cfg.out_dir / "isn_d.ckpt")
    return state


@torch.no_grad()
def pipeline_eval_l1(g1: Generator, g2: Generator, data: SplitTensors, cap: int = 16) -> float:
    """Mean absolute error of the composed pipeline on the split (signed units)."""
    g1.eval()
    g2.eval()
    n = min(len(data), cap)
    refined = g1(data.sketch[:n])
    photos = g2(refined)
    value = float((photos - data.photo[:n]).abs().mean())
    g1.train()
    g2.train()
    return value


def train_joint(cfg: TrainConfig, manifest: DatasetManifest,
                scn_state: TrainState, isn_state: TrainState) -> tuple[TrainState, TrainState]:
    """Stage 3: end-to-end fine-tuning; synthesis gradients reach stage 1."""
    torch.manual_seed(cfg.seed + 200)
    data = SplitTensors(manifest, cfg.split)
    log = _JsonlLog(cfg.out_dir / "metrics.jsonl")
    extractor = make_extractor(cfg.extractor, in_channels=3, seed=cfg.extractor_seed)

    g1, d1 = scn_state.generator, scn_state.discriminator
    g2, d2 = isn_state.generator, isn_state.discriminator
    opt_g1, opt_d1 = _make_optimizers(g1, d1, cfg.lr_joint, cfg.d_lr_ratio)
    opt_g2, opt_d2 = _make_optimizers(g2, d2, cfg.lr_joint, cfg.d_lr_ratio)

    eval_l1 = pipeline_eval_l1(g1, g2, data)
    log.append({"stage": "joint", "step": 0, "eval_l1": eval_l1})

    stopper = _EarlyStop(cfg.early_stop, cfg.early_stop_patience)
    step = 0
    for step in range(1, cfg.n3 + 1):
        idx = torch.from_numpy(_batch_indices(len(data), cfg.batch, cfg.data_seed, step - 1))
        sketch, detail, contour, photo = (
            data.sketch[idx], data.detail[idx], data.contour[idx], data.photo[idx],
        )

        refined = g1(sketch)
        fake = g2(refined)

        d1_loss = _scn_d_loss(d1, refined.detach(), detail, contour, cfg)
        opt_d1.zero_grad(set_to_none=True)
        d1_loss.backward()
        opt_d1.step()

        d2_loss = lsgan_d_loss(d2(photo), d2(fake.detach()),
                               labels=cfg.weights.lsgan_labels[:2])
        opt_d2.zero_grad(set_to_none=True)
        d2_loss.backward()
        opt_d2.step()

        _set_requires_grad(d1, False)
        _set_requires_grad(d2, False)
        adv1 = lsgan_g_loss(d1(refined), target=cfg.weights.lsgan_labels[2])
        cal = calibration_loss(d1, refined, detail, contour, cfg.calibration_mode)
        scn_report = scn_total(adv1, cal, cfg.weights)

        adv2 = lsgan_g_loss(d2(fake), target=cfg.weights.lsgan_labels[2])
        isn_report = isn_total(
            l1_loss(photo, fake), adv2,
            perceptual_loss(extractor, photo, fake),
            style_loss(extractor, photo, fake),
            tv_loss(fake), cfg.weights,
        )

        opt_g1.zero_grad(set_to_none=True)
        opt_g2.zero_grad(set_to_none=True)
        (scn_report.total_tensor + isn_report.total_tensor).backward()
        opt_g1.step()
        opt_g2.step()
        _set_requires_grad(d1, True)
        _set_requires_grad(d2, True)

        terms = {f"scn_{k}": v for k, v in scn_report.terms.items()}
        terms.update({f"isn_{k}": v for k, v in isn_report.terms.items()})
        terms.update(d1=float(d1_loss.detach()), d2=float(d2_loss.detach()),
                     total=scn_report.total + isn_report.total)
        _check_finite(terms, "joint", step, cfg.out_dir, g1, d1)
        if step % cfg.log_every == 0 or step == cfg.n3:
            log.append({"stage": "joint", "step": step, "lr": cfg.lr_joint, **terms})
        if step % cfg.eval_every == 0 or step == cfg.n3:
            eval_l1 = pipeline_eval_l1(g1, g2, data)
            log.append({"stage": "joint", "step": step, "eval_l1": eval_l1})
            if stopper.update(eval_l1):
                log.append({"stage": "joint", "step": step, "early_stop": True})
                break
        if step % cfg.checkpoint_every == 0:
            scn_state.step = isn_state.step = step
            save_train_state(scn_state, cfg, cfg.out_dir / "states" / f"joint_scn_{step}.pt")
            save_train_state(isn_state, cfg, cfg.out_dir / "states" / f"joint_isn_{step}.pt")

    scn_state.opt_g, scn_state.opt_d = opt_g1, opt_d1
    isn_state.opt_g, isn_state.opt_d = opt_g2, opt_d2
    scn_state.stage = isn_state.stage = "joint"
    scn_state.step = isn_state.step = step
    return scn_state, isn_state


def run_pipeline(cfg: TrainConfig, manifest: DatasetManifest) -> dict:
    """Stages 1-3 in order; emits final checkpoints, logs, and run metadata."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    scn_state = train_scn(cfg, manifest)
    isn_state = train_isn(cfg, manifest)
    scn_state, isn_state = train_joint(cfg, manifest, scn_state, isn_state)

    scn_path = cfg.out_dir / "scn.ckpt"
    isn_path = cfg.out_dir / "isn.ckpt"
    save_checkpoint(scn_state.generator, scn_path)
    save_checkpoint(isn_state.generator, isn_path)

    from .models import checkpoint_digest

    meta = {
        "config": cfg.resolved(),
        "config_hash": cfg.config_hash(),
        "calibration_mode": cfg.calibration_mode,
        "final_steps": {"scn": scn_state.step, "isn": isn_state.step},
        "checkpoints": {
            "scn": checkpoint_digest(scn_path),
            "isn": checkpoint_digest(isn_path),
        },
    }
    (cfg.out_dir / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta
