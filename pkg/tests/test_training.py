import json
import shutil
from pathlib import Path

import numpy as np
import pytest
import torch

from sketchface.dataset import BuilderConfig, build_dataset
from sketchface.losses import LossWeights
from sketchface.models import (
    DiscriminatorSpec,
    GeneratorSpec,
    build_discriminator,
    build_generator,
)
from sketchface.training import (
    SplitTensors,
    TrainConfig,
    TrainingDiverged,
    _check_finite,
    _batch_indices,
    _make_optimizers,
    _scn_step,
    load_train_state,
    run_pipeline,
    save_train_state,
    train_isn,
    train_joint,
    train_scn,
)

FIXTURES = Path(__file__).resolve().parent.parent / "assets" / "fixture_photos"


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("traindata")
    return build_dataset(FIXTURES, out, BuilderConfig(image_size=32, split_ratios=(1.0, 0, 0)))


def tiny_cfg(out_dir, **kw) -> TrainConfig:
    base = dict(n1=4, n2=4, n3=2, batch=4, image_size=32, g_width=4, d_width=4,
                checkpoint_every=2, eval_every=100, log_every=1, out_dir=out_dir)
    base.update(kw)
    return TrainConfig(**base)


def params_blob(module) -> bytes:
    return b"".join(p.detach().numpy().tobytes() for p in module.parameters())


class TestStageBudgets:
    def test_zero_budget_keeps_initial_weights(self, manifest, tmp_path):
        cfg = tiny_cfg(tmp_path / "r", n1=0)
        state = train_scn(cfg, manifest)
        fresh = build_generator(GeneratorSpec(1, 1, base_width=4), cfg.seed + 1)
        assert params_blob(state.generator) == params_blob(fresh)

    def test_zero_budget_isn(self, manifest, tmp_path):
        cfg = tiny_cfg(tmp_path / "r", n2=0)
        state = train_isn(cfg, manifest)
        fresh = build_generator(GeneratorSpec(1, 3, base_width=4), cfg.seed + 3)
        assert params_blob(state.generator) == params_blob(fresh)

    def test_zero_joint_budget_preserves_stage_outputs(self, manifest, tmp_path):
        cfg = tiny_cfg(tmp_path / "r", n3=0)
        s1 = train_scn(cfg, manifest)
        s2 = train_isn(cfg, manifest)
        g1_before = params_blob(s1.generator)
        g2_before = params_blob(s2.generator)
        train_joint(cfg, manifest, s1, s2)
        assert params_blob(s1.generator) == g1_before
        assert params_blob(s2.generator) == g2_before


class TestDeterminismAndResume:
    def test_identical_seeds_identical_logs(self, manifest, tmp_path):
        cfg_a = tiny_cfg(tmp_path / "a")
        cfg_b = tiny_cfg(tmp_path / "b")
        run_pipeline(cfg_a, manifest)
        run_pipeline(cfg_b, manifest)
        log_a = (tmp_path / "a" / "metrics.jsonl").read_text()
        log_b = (tmp_path / "b" / "metrics.jsonl").read_text()
        assert log_a == log_b

    def test_resume_matches_uninterrupted_bitwise(self, manifest, tmp_path):
        full = tiny_cfg(tmp_path / "full", n1=6, checkpoint_every=3)
        state_full = train_scn(full, manifest)

        part = tiny_cfg(tmp_path / "part", n1=6, checkpoint_every=3)
        part_cfg_first = tiny_cfg(tmp_path / "part", n1=3, checkpoint_every=3)
        train_scn(part_cfg_first, manifest)
        state_resumed = train_scn(part, manifest,
                                  resume=tmp_path / "part" / "states" / "scn_3.pt")
        assert state_resumed.step == 6
        assert params_blob(state_full.generator) == params_blob(state_resumed.generator)
        assert params_blob(state_full.discriminator) == params_blob(state_resumed.discriminator)

    def test_state_round_trip(self, manifest, tmp_path):
        cfg = tiny_cfg(tmp_path / "r")
        state = train_scn(cfg, manifest)
        p = tmp_path / "snap.pt"
        save_train_state(state, cfg, p)
        loaded = load_train_state(p, cfg, cfg.lr_stage12)
        assert loaded.step == state.step
        assert params_blob(loaded.generator) == params_blob(state.generator)
        for g_a, g_b in zip(state.opt_g.param_groups, loaded.opt_g.param_groups):
            assert g_a["lr"] == g_b["lr"]


class TestUpdateIsolation:
    def test_discriminator_step_never_touches_generator(self, manifest, tmp_path):
        data = SplitTensors(manifest, "train")
        cfg = tiny_cfg(tmp_path / "r")
        gen = build_generator(GeneratorSpec(1, 1, base_width=4), 1)
        disc = build_discriminator(DiscriminatorSpec(1, base_width=4), 2)
        opt_g, opt_d = _make_optimizers(gen, disc, 1e-4, 0.1)
        opt_g.step = lambda *a, **k: None  # freeze G updates
        before = params_blob(gen)
        idx = torch.from_numpy(_batch_indices(4, 4, 0, 0))
        _scn_step(gen, disc, opt_g, opt_d, (data.sketch[idx], data.detail[idx], data.contour[idx]), cfg)
        assert params_blob(gen) == before

    def test_generator_step_never_touches_discriminator(self, manifest, tmp_path):
        data = SplitTensors(manifest, "train")
        cfg = tiny_cfg(tmp_path / "r")
        gen = build_generator(GeneratorSpec(1, 1, base_width=4), 1)
        disc = build_discriminator(DiscriminatorSpec(1, base_width=4), 2)
        opt_g, opt_d = _make_optimizers(gen, disc, 1e-4, 0.1)
        opt_d.step = lambda *a, **k: None  # freeze D updates
        before = params_blob(disc)
        idx = torch.from_numpy(_batch_indices(4, 4, 0, 0))
        _scn_step(gen, disc, opt_g, opt_d, (data.sketch[idx], data.detail[idx], data.contour[idx]), cfg)
        assert params_blob(disc) == before


class TestStageTwoIsolation:
    def test_isn_never_opens_sketch_files(self, manifest, tmp_path):
        # Clone the dataset, delete every sketch file: stage 2 must still train.
        clone = tmp_path / "nosketch"
        shutil.copytree(manifest.root, clone)
        shutil.rmtree(clone / "sketches")
        from sketchface.dataset import DatasetManifest
        crippled = DatasetManifest.load(clone / "manifest.json")
        crippled.root = clone
        cfg = tiny_cfg(tmp_path / "r", n2=2)
        state = train_isn(cfg, crippled)
        assert state.step == 2
        # while stage 1 must fail without sketches
        with pytest.raises(Exception):
            train_scn(tiny_cfg(tmp_path / "r2", n1=1), crippled)


class TestJointStage:
    def test_learning_rates_plumbed(self, manifest, tmp_path):
        cfg = tiny_cfg(tmp_path / "r", n3=1, lr_joint=2e-5, d_lr_ratio=0.5)
        s1 = train_scn(cfg, manifest)
        s2 = train_isn(cfg, manifest)
        s1, s2 = train_joint(cfg, manifest, s1, s2)
        for state in (s1, s2):
            assert state.opt_g.param_groups[0]["lr"] == pytest.approx(2e-5)
            assert state.opt_d.param_groups[0]["lr"] == pytest.approx(1e-5)

    def test_eval_l1_logged(self, manifest, tmp_path):
        cfg = tiny_cfg(tmp_path / "r", n3=2, eval_every=1)
        s1 = train_scn(cfg, manifest)
        s2 = train_isn(cfg, manifest)
        train_joint(cfg, manifest, s1, s2)
        lines = [json.loads(l) for l in (tmp_path / "r" / "metrics.jsonl").read_text().splitlines()]
        evals = [l for l in lines if l["stage"] == "joint" and "eval_l1" in l]
        assert evals[0]["step"] == 0
        assert len(evals) >= 2
        assert all(np.isfinite(e["eval_l1"]) for e in evals)


class TestPipeline:
    def test_smoke_writes_all_outputs(self, manifest, tmp_path):
        cfg = tiny_cfg(tmp_path / "r", n1=2, n2=2, n3=1)
        meta = run_pipeline(cfg, manifest)
        assert (tmp_path / "r" / "scn.ckpt").exists()
        assert (tmp_path / "r" / "isn.ckpt").exists()
        assert meta["checkpoints"]["scn"] != meta["checkpoints"]["isn"]
        lines = (tmp_path / "r" / "metrics.jsonl").read_text().splitlines()
        for line in lines:
            doc = json.loads(line)
            for key, v in doc.items():
                if isinstance(v, float):
                    assert np.isfinite(v), f"non-finite {key} in {doc}"

    def test_ablation_modes_distinct_lineage(self, manifest, tmp_path):
        meta_a = run_pipeline(tiny_cfg(tmp_path / "a", n1=2, n2=1, n3=1), manifest)
        meta_b = run_pipeline(
            tiny_cfg(tmp_path / "b", n1=2, n2=1, n3=1, calibration_mode="detail_only"),
            manifest)
        assert meta_a["calibration_mode"] == "both"
        assert meta_b["calibration_mode"] == "detail_only"
        assert meta_a["config_hash"] != meta_b["config_hash"]
        assert meta_a["checkpoints"]["scn"] != meta_b["checkpoints"]["scn"]


class TestDivergenceGuard:
    def test_non_finite_raises_with_snapshot(self, tmp_path):
        gen = build_generator(GeneratorSpec(1, 1, base_width=4), 0)
        disc = build_discriminator(DiscriminatorSpec(1, base_width=4), 1)
        with pytest.raises(TrainingDiverged, match="non-finite"):
            _check_finite({"adv": float("nan")}, "scn", 7, tmp_path, gen, disc)
        snap = tmp_path / "diverged_scn_7"
        assert (snap / "generator.ckpt").exists()
        assert (snap / "discriminator.ckpt").exists()

    def test_finite_terms_pass(self, tmp_path):
        gen = build_generator(GeneratorSpec(1, 1, base_width=4), 0)
        disc = build_discriminator(DiscriminatorSpec(1, base_width=4), 1)
        _check_finite({"adv": 0.5}, "scn", 1, tmp_path, gen, disc)
        assert not list(tmp_path.iterdir())


def test_config_validation():
    from sketchface.buffers import ContractViolation

    with pytest.raises(ContractViolation):
        TrainConfig(lr_stage12=0.0)
    with pytest.raises(ContractViolation):
        TrainConfig(calibration_mode="sometimes")
    with pytest.raises(ContractViolation):
        TrainConfig(batch=0)
