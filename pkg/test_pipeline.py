"""Tests for the staged experiment driver (pipeline.py).

Stage bookkeeping (staging dirs, .failed, resume, config-hash guard) runs
against stub stages; one micro experiment runs every real stage twice to
check that outputs are byte-identical.
"""

import math
from pathlib import Path
from unittest.mock import patch

import pytest

import config
import manifest as manifest_mod
from errors import ConfigError, NumericError, StageError
from experiment_config import config_hash, load_config, validate_data
from pipeline import STAGES, content_summary, fid_reduced, fid_summary, run_pipeline, stage_seeds


# ── Helpers ─────────────────────────────────────────────────────────────────

MICRO = {
    "name": "micro",
    "seed": 3,
    "population": {"n_subjects": 2},
    "simulation": {"n_slices": 3},
    "real_domain": {"n_subjects": 2},
    "preprocess": {"width": 16, "height": 16, "margin": 8},
    "translator": {
        "iterations": 2,
        "n_patches": 8,
        "crop_size": None,
        "head_dim": 8,
        "log_every": 1,
        "generator": {"base_channels": 4, "n_downsamples": 1, "n_resblocks": 1, "nce_layers": [0, 2]},
        "discriminator": {"base_channels": 4, "n_layers": 2},
    },
    "metrics": {"extractor": "random_conv", "seed": 1},
}


def _micro(**changes):
    data = {**MICRO, **changes}
    cfg, findings = validate_data(data)
    assert findings == []
    return cfg


def _stub_stages(calls: list[str]) -> dict:
    def make(stage):
        def run(ctx, out):
            calls.append(stage)
            (out / "done.txt").write_text(stage)
            return {"stub": stage}
        return run
    return {stage: make(stage) for stage in STAGES}


def _stubbed(calls: list[str]):
    return patch.dict("pipeline._STAGE_FUNCS", _stub_stages(calls))


# ── Stage bookkeeping ───────────────────────────────────────────────────────

def test_stages_run_in_order(tmp_path):
    calls = []
    with _stubbed(calls):
        root = run_pipeline(_micro(), tmp_path / "exp")
    assert calls == list(STAGES)
    for stage in STAGES:
        assert (root / stage / "done.txt").read_text() == stage
    manifest = manifest_mod.load_manifest(root)
    assert [s["name"] for s in manifest["stages"]] == list(STAGES)
    assert manifest["config_hash"] == config_hash(_micro())
    assert manifest["seeds"]["phantom"] == str(_micro().stage_seed("phantom"))


def test_resume_skips_completed_stages(tmp_path):
    calls = []
    with _stubbed(calls):
        root = run_pipeline(_micro(), tmp_path / "exp")
        calls.clear()
        run_pipeline(_micro(), root)
        assert calls == []

        # A completed stage whose directory went missing is redone.
        (root / "reports" / "done.txt").unlink()
        (root / "reports").rmdir()
        run_pipeline(_micro(), root)
    assert calls == ["reports"]


def test_resume_ignores_output_root(tmp_path):
    calls = []
    with _stubbed(calls):
        root = run_pipeline(_micro(), tmp_path / "exp")
        calls.clear()
        run_pipeline(_micro(output_root=str(tmp_path / "elsewhere")), root)
    assert calls == []


def test_different_config_refused(tmp_path):
    calls = []
    with _stubbed(calls):
        root = run_pipeline(_micro(), tmp_path / "exp")
        with pytest.raises(ConfigError, match="different experiment"):
            run_pipeline(_micro(seed=4), root)


def test_failed_stage_kept_aside(tmp_path):
    calls = []
    stages = _stub_stages(calls)

    def broken(ctx, out):
        (out / "partial.txt").write_text("half")
        raise ValueError("boom")

    stages["sim"] = broken
    root = tmp_path / "exp"
    with patch.dict("pipeline._STAGE_FUNCS", stages):
        with pytest.raises(StageError) as exc:
            run_pipeline(_micro(), root)
    assert exc.value.stage == "sim"
    assert exc.value.exit_code == 2
    assert (root / "sim.failed" / "partial.txt").read_text() == "half"
    assert not (root / ".sim.tmp").exists()
    assert not (root / "sim").exists()
    assert (root / "labels" / "done.txt").exists()
    assert [s["name"] for s in manifest_mod.load_manifest(root)["stages"]] == ["labels"]

    calls.clear()
    with _stubbed(calls):
        run_pipeline(_micro(), root)
    assert calls == list(STAGES[1:])
    assert not (root / "sim.failed").exists()


def test_stage_error_keeps_numeric_exit_code(tmp_path):
    stages = _stub_stages([])

    def diverged(ctx, out):
        raise NumericError("loss is not finite")

    stages["checkpoints"] = diverged
    with patch.dict("pipeline._STAGE_FUNCS", stages):
        with pytest.raises(StageError) as exc:
            run_pipeline(_micro(), tmp_path / "exp")
    assert exc.value.exit_code == 3


def test_default_directory_from_config(tmp_path):
    with _stubbed([]):
        root = run_pipeline(_micro(output_root=str(tmp_path)))
    assert root == Path(tmp_path) / "micro"


def test_stage_seeds_are_distinct():
    seeds = stage_seeds(_micro())
    assert seeds["metrics"] == 1
    derived = [v for k, v in seeds.items() if k != "metrics"]
    assert len(set(derived)) == len(derived)


def test_fid_summary_parses_report(tmp_path):
    (tmp_path / "reports").mkdir()
    (tmp_path / "reports" / "fid.csv").write_text(
        "comparison,fid,n_a,n_b,extractor\n"
        "sim_vs_real,4.5,10,10,x\n"
        "translated_vs_real,2.25,10,10,x\n"
    )
    assert fid_summary(tmp_path) == {"sim_vs_real": 4.5, "translated_vs_real": 2.25}
    assert fid_reduced(tmp_path)


def test_content_summary_parses_report(tmp_path):
    (tmp_path / "reports").mkdir()
    (tmp_path / "reports" / "content.csv").write_text(
        "translated_mad,swapped_mad,n_images,preserved\n"
        "0.05,0.25,64,true\n"
    )
    assert content_summary(tmp_path) == {"translated_mad": 0.05, "swapped_mad": 0.25, "n_images": 64, "preserved": True}


# ── Micro experiment ────────────────────────────────────────────────────────

@pytest.fixture(scope="module")
def micro_run(tmp_path_factory) -> Path:
    return run_pipeline(_micro(), tmp_path_factory.mktemp("micro") / "a")


def test_micro_run_writes_every_artifact(micro_run):
    for stage in STAGES:
        assert (micro_run / stage).is_dir()
    assert len(list((micro_run / "labels").glob("*.vol"))) == 4
    assert len(list((micro_run / "labels" / "slices").glob("*.lbl"))) == 12
    assert len(list((micro_run / "sim").glob("*.img"))) == 12
    assert len(list((micro_run / "translated").glob("*.img"))) == 12
    assert (micro_run / "checkpoints" / "model.ckpt").exists()
    for name in ("fid.csv", "volumes.csv", "losses.csv", "content.csv"):
        assert (micro_run / "reports" / name).exists()
    assert len((micro_run / "reports" / "losses.csv").read_text().splitlines()) == 3


def test_micro_run_fid_rows(micro_run):
    fid = fid_summary(micro_run)
    assert list(fid) == ["sim_vs_real", "translated_vs_real"]
    assert all(math.isfinite(v) and v >= 0.0 for v in fid.values())


def test_micro_run_content_report(micro_run):
    content = content_summary(micro_run)
    assert content["n_images"] == 12
    assert content["translated_mad"] >= 0.0 and content["swapped_mad"] > 0.0
    assert content["preserved"] == (content["translated_mad"] < content["swapped_mad"])


def test_micro_run_is_byte_identical(micro_run, tmp_path):
    again = run_pipeline(_micro(), tmp_path / "b")
    for rel in ("reports/fid.csv", "reports/volumes.csv", "reports/losses.csv", "reports/content.csv",
                "checkpoints/model.ckpt"):
        assert (micro_run / rel).read_bytes() == (again / rel).read_bytes(), rel
    first = sorted(p.name for p in (micro_run / "translated").glob("*.img"))
    assert first == sorted(p.name for p in (again / "translated").glob("*.img"))
    for name in first:
        assert (micro_run / "translated" / name).read_bytes() == (again / "translated" / name).read_bytes()


# ── Toy experiment ──────────────────────────────────────────────────────────

TOY_SEEDS = range(5)


@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory) -> dict[int, Path]:
    toy = Path(config.__file__).parent / "configs" / "toy.json"
    base = tmp_path_factory.mktemp("toy")
    return {
        seed: run_pipeline(load_config(toy, [f"seed={seed}", f"name=seed{seed}"]), base / f"seed{seed}")
        for seed in TOY_SEEDS
    }


@pytest.mark.slow
def test_toy_runs_complete(toy_runs):
    for root in toy_runs.values():
        assert [s["name"] for s in manifest_mod.load_manifest(root)["stages"]] == list(STAGES)
        assert len(list((root / "preprocessed" / "sim").glob("*.img"))) == 64
        assert len(list((root / "preprocessed" / "real").glob("*.img"))) == 64


@pytest.mark.slow
def test_toy_translation_reduces_fid(toy_runs):
    reduced = [seed for seed, root in toy_runs.items() if fid_reduced(root)]
    assert len(reduced) >= 4, {seed: fid_summary(root) for seed, root in toy_runs.items()}


@pytest.mark.slow
def test_toy_translation_keeps_content(toy_runs):
    for seed, root in toy_runs.items():
        assert content_summary(root)["preserved"], (seed, content_summary(root))
