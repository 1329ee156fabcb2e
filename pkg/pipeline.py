"""
pipeline.py — End-to-end experiment: labels → sim → real → preprocessed →
checkpoints → translated → reports.

Each stage writes into a hidden staging directory and is renamed into place
only when it finishes, so a failure never leaves a half-written stage next to
good ones. A failed stage's partial output is kept as ``<stage>.failed`` for
inspection. Re-running an experiment directory with the same config resumes
after the last completed stage; a different config is refused.
"""

from __future__ import annotations

import csv
import logging
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

import artifacts
import config
import manifest as manifest_mod
from errors import ConfigError, StageError
from experiment_config import ExperimentConfig, config_hash
from feature_extractors import create_extractor
from metrics import realism_report, write_fid_csv
from phantom import (
    Phase,
    PopulationSpec,
    VirtualSubjectSpec,
    extract_midventricular_slices,
    generate_virtual_subject,
    load_label_slice,
    load_label_volume,
    sample_population,
    save_label_slice,
    save_label_volume,
    volume_statistics,
    write_volume_csv,
)
from preprocess import preprocess_labels_sim, preprocess_real, preprocess_sim
from seeds import derive_seed
from simulate import Image2D, load_image, load_image_dir, save_image, simulate_slice, texturize
from translate import content_preservation, load_model, save_model, train_cut, translate_batch, write_loss_log

log = logging.getLogger(__name__)

STAGES = ("labels", "sim", "real", "preprocessed", "checkpoints", "translated", "reports")
SEED_STAGES = ("phantom", "simulate", "real.phantom", "real.simulate", "real.texture", "translate")


@dataclass
class RunContext:
    cfg: ExperimentConfig
    root: Path
    seeds: dict[str, int]

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)


def stage_seeds(cfg: ExperimentConfig) -> dict[str, int]:
    seeds = {stage: cfg.stage_seed(stage) for stage in SEED_STAGES}
    seeds["metrics"] = cfg.metrics.seed
    return seeds


def experiment_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_root) / cfg.name


def _map(fn: Callable, items: list) -> list:
    """Order-preserving map; per-item work is seeded, so worker count never changes results."""
    if config.WORKERS <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=config.WORKERS) as pool:
        return list(pool.map(fn, items))


# ── Stage helpers ────────────────────────────────────────────────────────────

def render_subjects(specs: list[VirtualSubjectSpec], cfg: ExperimentConfig, vol_dir: Path | None, slice_dir: Path) -> int:
    pop = cfg.population

    def one(spec: VirtualSubjectSpec) -> int:
        count = 0
        for vol in generate_virtual_subject(spec, pop.dims, pop.spacing):
            if vol_dir is not None:
                save_label_volume(vol, vol_dir / f"{spec.subject_id}_{vol.phase.value}.vol")
            for sl in extract_midventricular_slices(vol, cfg.simulation.n_slices):
                save_label_slice(sl, slice_dir / f"{sl.name}.lbl")
                count += 1
        return count

    return sum(_map(one, specs))


def simulate_directory(slice_dir: Path, out_dir: Path, cfg: ExperimentConfig, seed: int,
                  texture_seed: int | None = None) -> int:
    seq = cfg.sequence.to_params(seed)
    table = cfg.simulation.table()
    rd = cfg.real_domain
    files = sorted(slice_dir.glob("*.lbl"))

    def one(path: Path) -> None:
        sl = load_label_slice(path)
        img = simulate_slice(sl, seq, table, cfg.simulation.variation_pct, seed)
        if texture_seed is not None:
            img = texturize(img, derive_seed(texture_seed, "texture", sl.name), texture_sd=rd.texture_sd,
                            correlation_px=rd.correlation_px, gradient_strength=rd.gradient_strength)
        save_image(img, out_dir / f"{sl.name}.img")

    _map(one, files)
    return len(files)


def _images(directory: Path) -> list[tuple[str, Image2D]]:
    return load_image_dir(directory)


# ── Stages ───────────────────────────────────────────────────────────────────

def stage_labels(ctx: RunContext, out: Path) -> dict:
    specs = sample_population(ctx.cfg.population.to_spec(), ctx.seeds["phantom"])
    (out / "slices").mkdir(parents=True)
    n = render_subjects(specs, ctx.cfg, out, out / "slices")
    log.info("pipeline: labels for %d subjects, %d slices", len(specs), n)
    return {"subjects": len(specs), "slices": n}


def stage_sim(ctx: RunContext, out: Path) -> dict:
    n = simulate_directory(ctx.path("labels", "slices"), out, ctx.cfg, ctx.seeds["simulate"])
    log.info("pipeline: simulated %d images (%s)", n, ctx.cfg.sequence.kind.value)
    return {"images": n}


def stage_real(ctx: RunContext, out: Path) -> dict:
    rd = ctx.cfg.real_domain
    if rd.source == "directory":
        files = sorted(Path(rd.directory).glob("*.img"))
        if not files:
            raise FileNotFoundError(f"no .img files in real directory {rd.directory}")
        for f in files:
            load_image(f)
            shutil.copyfile(f, out / f.name)
        log.info("pipeline: imported %d real images from %s", len(files), rd.directory)
        return {"images": len(files), "source": "directory"}

    pop = PopulationSpec(rd.n_subjects, "real", dict(ctx.cfg.population.ranges))
    specs = sample_population(pop, ctx.seeds["real.phantom"])
    (out / "labels").mkdir(parents=True)
    render_subjects(specs, ctx.cfg, None, out / "labels")
    n = simulate_directory(out / "labels", out, ctx.cfg, ctx.seeds["real.simulate"], ctx.seeds["real.texture"])
    log.info("pipeline: synthesised %d textured real-domain images", n)
    return {"images": n, "source": "synthetic"}


def stage_preprocessed(ctx: RunContext, out: Path) -> dict:
    pp = ctx.cfg.preprocess
    for sub in ("sim", "sim_labels", "real"):
        (out / sub).mkdir(parents=True)

    slices = ctx.path("labels", "slices")
    for name, img in _images(ctx.path("sim")):
        labels = load_label_slice(slices / f"{name}.lbl")
        save_image(preprocess_sim(img, labels, pp.margin, pp.width, pp.height), out / "sim" / f"{name}.img")
        save_label_slice(preprocess_labels_sim(labels, pp.margin, pp.width, pp.height), out / "sim_labels" / f"{name}.lbl")

    real_labels = ctx.path("real", "labels")
    if pp.real_mode == "bbox" and not real_labels.is_dir():
        raise ConfigError("preprocess.real_mode: 'bbox' needs label slices for the real domain")
    n_real = 0
    for name, img in _images(ctx.path("real")):
        if pp.real_mode == "bbox":
            pre = preprocess_sim(img, load_label_slice(real_labels / f"{name}.lbl"), pp.margin, pp.width, pp.height)
        else:
            pre = preprocess_real(img, pp.width, pp.height, pp.real_resize)
        save_image(pre, out / "real" / f"{name}.img")
        n_real += 1
    return {"real": n_real, "real_mode": pp.real_mode}


def stage_checkpoints(ctx: RunContext, out: Path) -> dict:
    tr = ctx.cfg.translator
    sim = [img for _, img in _images(ctx.path("preprocessed", "sim"))]
    real = [img for _, img in _images(ctx.path("preprocessed", "real"))]
    model, records = train_cut(
        sim, real,
        tr.generator.to_spec(), tr.discriminator.to_spec(), tr.to_config(ctx.seeds["translate"]),
        checkpoint_path=out / "last_good.ckpt",
    )
    save_model(model, out / "model.ckpt")
    write_loss_log(records, out / "losses.csv")
    return {"iterations": model.iterations, "model_id": model.model_id}


def stage_translated(ctx: RunContext, out: Path) -> dict:
    model = load_model(ctx.path("checkpoints", "model.ckpt"))
    named = _images(ctx.path("preprocessed", "sim"))
    for (name, _), img in zip(named, translate_batch(model, [img for _, img in named])):
        save_image(img, out / f"{name}.img")
    return {"images": len(named), "model_id": model.model_id}


def stage_reports(ctx: RunContext, out: Path) -> dict:
    m = ctx.cfg.metrics
    sim = _images(ctx.path("preprocessed", "sim"))
    real = [img for _, img in _images(ctx.path("preprocessed", "real"))]
    translated = [img for _, img in _images(ctx.path("translated"))]

    rows = realism_report([img for _, img in sim], real, translated, create_extractor(m.extractor, m.seed))
    write_fid_csv(rows, out / "fid.csv")

    pairs = []
    for ed_path in sorted(ctx.path("labels").glob(f"*_{Phase.ED.value}.vol")):
        es_path = ed_path.with_name(ed_path.name.replace(f"_{Phase.ED.value}.vol", f"_{Phase.ES.value}.vol"))
        pairs.append((load_label_volume(ed_path), load_label_volume(es_path)))
    write_volume_csv(volume_statistics(pairs), out / "volumes.csv")

    shutil.copyfile(ctx.path("checkpoints", "losses.csv"), out / "losses.csv")

    masks = [load_label_slice(ctx.path("preprocessed", "sim_labels", f"{name}.lbl")).heart_mask() for name, _ in sim]
    cp = content_preservation([img for _, img in sim], translated, real, masks, seed=ctx.seeds["metrics"])
    artifacts.atomic_write_text(
        out / "content.csv",
        "translated_mad,swapped_mad,n_images,preserved\n"
        f"{cp.translated_mad:.10g},{cp.swapped_mad:.10g},{cp.n_images},{str(cp.preserved).lower()}\n",
    )
    fid = {r.comparison: r.fid for r in rows}
    return {k: round(v, 6) for k, v in fid.items()}


_STAGE_FUNCS: dict[str, Callable[[RunContext, Path], dict]] = {
    "labels": stage_labels,
    "sim": stage_sim,
    "real": stage_real,
    "preprocessed": stage_preprocessed,
    "checkpoints": stage_checkpoints,
    "translated": stage_translated,
    "reports": stage_reports,
}


# ── Driver ───────────────────────────────────────────────────────────────────

def _run_stage(ctx: RunContext, stage: str) -> dict:
    final = ctx.path(stage)
    staging = ctx.path(f".{stage}.tmp")
    failed = ctx.path(f"{stage}.failed")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    try:
        details = _STAGE_FUNCS[stage](ctx, staging)
    except Exception as exc:
        if failed.exists():
            shutil.rmtree(failed)
        os.replace(staging, failed)
        log.error("pipeline: stage %s failed: %s (partial output in %s)", stage, exc, failed)
        raise StageError(stage, exc) from exc
    if final.exists():
        shutil.rmtree(final)
    os.replace(staging, final)
    if failed.exists():
        shutil.rmtree(failed)
    return details


def run_pipeline(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> Path:
    """Run (or resume) every stage; returns the experiment directory."""
    root = Path(out_dir) if out_dir is not None else experiment_dir(cfg)
    root.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    seeds = stage_seeds(cfg)

    existing = manifest_mod.load_manifest(root)
    if existing is not None and existing.get("config_hash") != digest:
        raise ConfigError(
            f"{root} holds a different experiment (config hash {existing.get('config_hash', '')[:12]}); "
            "choose another output directory"
        )
    manifest = existing or manifest_mod.build_manifest(
        name=cfg.name, config_hash=digest, experiment_config=cfg.to_dict(), seeds=seeds,
    )
    done = manifest_mod.completed_stages(existing)
    manifest_mod.save_manifest(root, manifest)

    ctx = RunContext(cfg, root, seeds)
    log.info("pipeline: experiment %s in %s (config %s)", cfg.name, root, digest[:12])
    for stage in STAGES:
        if stage in done and ctx.path(stage).is_dir():
            log.info("pipeline: %s already complete, skipping", stage)
            continue
        log.info("pipeline: running %s", stage)
        details = _run_stage(ctx, stage)
        manifest = manifest_mod.mark_stage(manifest, stage, **details)
        manifest_mod.save_manifest(root, manifest)
    return root


def fid_summary(root: str | Path) -> dict[str, float]:
    """comparison → FID from an experiment's reports/fid.csv."""
    lines = Path(root, "reports", "fid.csv").read_text().splitlines()[1:]
    return {parts[0]: float(parts[1]) for parts in (line.split(",") for line in lines if line)}


def fid_reduced(root: str | Path) -> bool:
    fid = fid_summary(root)
    return bool(np.isfinite(fid["translated_vs_real"]) and fid["translated_vs_real"] < fid["sim_vs_real"])


def content_summary(root: str | Path) -> dict:
    """The content-preservation row from an experiment's reports/content.csv."""
    with open(Path(root, "reports", "content.csv"), newline="") as fh:
        row = next(csv.DictReader(fh))
    return {
        "translated_mad": float(row["translated_mad"]),
        "swapped_mad": float(row["swapped_mad"]),
        "n_images": int(row["n_images"]),
        "preserved": row["preserved"] == "true",
    }
