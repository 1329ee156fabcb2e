"""
translate.py — One-sided contrastive unpaired translation (sim → real texture).

One generator, one patch discriminator and per-layer projection heads.
Content is held by a multilayer patch-wise InfoNCE loss between the source
image and its translation; style comes from a least-squares adversarial loss.
An identity NCE term on real images keeps the generator from changing images
that already look real. No second generator and no cycle exist anywhere.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

import artifacts
import tensor as T
from errors import ConfigError, NumericError, Sim2RealError
from helpers.budget import TrainingBudget
from helpers.progress import TrainingProgress
from networks import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, HeadSet
from seeds import derive_seed, rng_for
from simulate import Image2D
from tensor import CheckpointError, ShapeError, Tensor

log = logging.getLogger(__name__)

MODEL_KIND = "cut_translator"


class PatchSetMismatchError(Sim2RealError, ValueError):
    pass


# ── Config ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TranslatorConfig:
    tau: float = 0.07
    lambda_nce: float = 1.0
    lambda_nce_identity: float = 1.0
    n_patches: int = 64
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    iterations: int = 2000
    batch_size: int = 1
    seed: int = 0
    crop_size: int | None = 64
    head_dim: int = 128
    log_every: int = 50
    max_seconds: float | None = None

    def validate(self) -> list[str]:
        problems = []
        if not self.tau > 0:
            problems.append(f"tau must be > 0 (got {self.tau})")
        if self.n_patches < 2:
            problems.append(f"n_patches must be >= 2 (got {self.n_patches})")
        if self.lambda_nce < 0 or self.lambda_nce_identity < 0:
            problems.append("loss weights must be >= 0")
        if not self.lr > 0:
            problems.append(f"lr must be > 0 (got {self.lr})")
        if self.iterations < 0:
            problems.append(f"iterations must be >= 0 (got {self.iterations})")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1 (got {self.batch_size})")
        if self.crop_size is not None and self.crop_size < 8:
            problems.append(f"crop_size must be >= 8 or null (got {self.crop_size})")
        if self.head_dim < 1:
            problems.append(f"head_dim must be >= 1 (got {self.head_dim})")
        return problems

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TranslatorConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


# ── Patch embeddings ─────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PatchEmbeddingSet:
    layer: int
    indices: tuple[int, ...]
    embeddings: Tensor                  # [N, n_patches, d], unit rows

    @property
    def n_patches(self) -> int:
        return len(self.indices)

    def detached(self) -> "PatchEmbeddingSet":
        return PatchEmbeddingSet(self.layer, self.indices, self.embeddings.detach())


def sample_patches(
    features: Tensor,
    head,
    n_patches: int,
    *,
    indices: Sequence[int] | None = None,
    seed: int | None = None,
    layer: int = 0,
) -> PatchEmbeddingSet:
    """Embed the feature vectors at n_patches spatial positions.

    With ``indices`` those exact flattened (y * W + x) positions are used, so a
    translated image can reuse its source's draw; otherwise they are drawn
    without replacement from ``seed``.
    """
    if features.ndim != 4:
        raise ShapeError(f"features must be [N, C, H, W], got {features.shape}")
    n, c, h, w = features.shape
    positions = h * w
    if indices is None:
        if n_patches > positions:
            raise ValueError(f"n_patches {n_patches} exceeds {positions} spatial positions at layer {layer}")
        idx = np.random.default_rng(seed).permutation(positions)[:n_patches]
    else:
        idx = np.asarray(indices, dtype=np.intp)
        if idx.size != n_patches:
            raise PatchSetMismatchError(f"got {idx.size} indices for {n_patches} patches")
        if idx.size and (idx.min() < 0 or idx.max() >= positions):
            raise ValueError(f"patch index out of range for {h}x{w} features")
    flat = features.reshape(n, c, positions).transpose((0, 2, 1)).take(idx, axis=1)
    emb = head(flat.reshape(n * idx.size, c)).reshape(n, idx.size, -1)
    return PatchEmbeddingSet(layer, tuple(int(i) for i in idx), emb)


def patchnce_loss(src: PatchEmbeddingSet, tr: PatchEmbeddingSet, tau: float) -> Tensor:
    """Mean over patches of -log softmax_j(<tr_i, src_j> / tau)[i]."""
    if not tau > 0:
        raise ValueError(f"tau must be > 0 (got {tau})")
    if src.layer != tr.layer:
        raise PatchSetMismatchError(f"layer mismatch: {src.layer} vs {tr.layer}")
    if src.indices != tr.indices:
        raise PatchSetMismatchError("source and translated sets use different spatial indices")
    if src.embeddings.shape != tr.embeddings.shape:
        raise PatchSetMismatchError(f"embedding shapes differ: {src.embeddings.shape} vs {tr.embeddings.shape}")
    k = src.n_patches
    s = (tr.embeddings @ src.embeddings.transpose((0, 2, 1))) * (1.0 / tau)
    positives = (s * np.eye(k)).sum(axis=-1)
    return T.mean(T.logsumexp(s, axis=-1) - positives)


# ── Adversarial loss ─────────────────────────────────────────────────────────

def lsgan_d_loss(disc_real: Tensor, disc_fake: Tensor) -> Tensor:
    return 0.5 * T.mean((disc_real - 1.0) ** 2) + 0.5 * T.mean(disc_fake ** 2)


def lsgan_g_loss(disc_fake: Tensor) -> Tensor:
    return T.mean((disc_fake - 1.0) ** 2)


def lsgan_losses(disc_real: Tensor, disc_fake: Tensor) -> tuple[Tensor, Tensor]:
    disc_real, disc_fake = T.as_tensor(disc_real), T.as_tensor(disc_fake)
    if disc_real.shape != disc_fake.shape:
        raise ShapeError(f"score maps differ: {disc_real.shape} vs {disc_fake.shape}")
    return lsgan_d_loss(disc_real, disc_fake), lsgan_g_loss(disc_fake)


# ── Model ────────────────────────────────────────────────────────────────────

@dataclass(eq=False)
class TrainedModel:
    generator: Generator
    discriminator: Discriminator
    heads: HeadSet
    config: TranslatorConfig
    iterations: int = 0

    @property
    def gen_spec(self) -> GeneratorSpec:
        return self.generator.spec

    @property
    def disc_spec(self) -> DiscriminatorSpec:
        return self.discriminator.spec

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for prefix, module in (("G.", self.generator), ("D.", self.discriminator), ("H.", self.heads)):
            state.update({prefix + k: v for k, v in module.state_dict().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for prefix, module in (("G.", self.generator), ("D.", self.discriminator), ("H.", self.heads)):
            module.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})

    @property
    def model_id(self) -> str:
        """Content hash of the generator weights (as stored, float32 LE)."""
        h = hashlib.sha256()
        for name, arr in sorted(self.generator.state_dict().items()):
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return h.hexdigest()[:12]


def build_model(gen_spec: GeneratorSpec, disc_spec: DiscriminatorSpec, config: TranslatorConfig) -> TrainedModel:
    return TrainedModel(
        Generator(gen_spec, rng_for(config.seed, "translate.init", "generator")),
        Discriminator(disc_spec, rng_for(config.seed, "translate.init", "discriminator")),
        HeadSet.build(gen_spec, config.head_dim, rng_for(config.seed, "translate.init", "heads")),
        config,
    )


def save_model(model: TrainedModel, path: str | Path, *, state: dict[str, np.ndarray] | None = None) -> Path:
    meta = {
        "kind": MODEL_KIND,
        "model_id": model.model_id,
        "generator": model.gen_spec.to_dict(),
        "discriminator": model.disc_spec.to_dict(),
        "translator": model.config.to_dict(),
        "iterations": model.iterations,
    }
    return T.save_checkpoint(path, state if state is not None else model.state_dict(), meta)


def load_model(path: str | Path) -> TrainedModel:
    tensors, meta = T.load_checkpoint(path)
    if meta.get("kind") != MODEL_KIND:
        raise CheckpointError(f"{path}: not a translator checkpoint (kind={meta.get('kind')!r})")
    try:
        gen_spec = GeneratorSpec.from_dict(meta["generator"])
        disc_spec = DiscriminatorSpec.from_dict(meta["discriminator"])
        config = TranslatorConfig.from_dict(meta["translator"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: checkpoint meta incomplete: {exc}") from exc
    model = build_model(gen_spec, disc_spec, config)
    try:
        model.load_state_dict(tensors)
    except ShapeError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    model.iterations = int(meta.get("iterations", 0))
    return model


# ── Training ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class LossRecord:
    iteration: int
    loss_D: float
    loss_G: float
    loss_NCE: float
    loss_NCE_id: float


def _as_stack(images: Sequence[Image2D | np.ndarray], role: str) -> np.ndarray:
    if not images:
        raise ValueError(f"{role} dataset is empty")
    arrays = [img.pixels if isinstance(img, Image2D) else np.asarray(img, dtype=np.float64) for img in images]
    shape = arrays[0].shape
    for a in arrays:
        if a.shape != shape:
            raise ShapeError(f"{role} images differ in dims: {a.shape} vs {shape}")
    return np.stack(arrays)


def _draw_batch(rng: np.random.Generator, data: np.ndarray, batch_size: int, crop: int | None) -> Tensor:
    _, h, w = data.shape
    picks = rng.integers(0, len(data), size=batch_size)
    if crop is None or crop >= min(h, w):
        return Tensor(data[picks][:, None])
    ys = rng.integers(0, h - crop + 1, size=batch_size)
    xs = rng.integers(0, w - crop + 1, size=batch_size)
    batch = np.stack([data[i, y:y + crop, x:x + crop] for i, y, x in zip(picks, ys, xs)])
    return Tensor(batch[:, None])


def multilayer_nce(model: TrainedModel, source: Tensor, target: Tensor, seed: int) -> Tensor:
    """NCE between source and its translation, summed over the tapped layers.

    The source side is embedded without gradient; the heads and generator
    learn through the translated side only.
    """
    layers = model.gen_spec.nce_layers
    cfg = model.config
    with T.no_grad():
        src_feats = model.generator.encode(source, layers)
        src_sets = [
            sample_patches(f, model.heads[layer], cfg.n_patches, seed=derive_seed(seed, "layer", layer), layer=layer)
            for layer, f in zip(layers, src_feats)
        ]
    total = None
    for src_set, feats in zip(src_sets, model.generator.encode(target, layers)):
        tr_set = sample_patches(feats, model.heads[src_set.layer], cfg.n_patches,
                                indices=src_set.indices, layer=src_set.layer)
        term = patchnce_loss(src_set, tr_set, cfg.tau)
        total = term if total is None else total + term
    return total


def _train_step(model, sim, real, opt_d, opt_g, batch_rng, patch_rng, iteration: int) -> LossRecord:
    cfg = model.config
    G, D = model.generator, model.discriminator
    sim_b = _draw_batch(batch_rng, sim, cfg.batch_size, cfg.crop_size)
    real_b = _draw_batch(batch_rng, real, cfg.batch_size, cfg.crop_size)

    fake = G(sim_b)

    opt_d.zero_grad()
    loss_d = lsgan_d_loss(D(real_b), D(fake.detach()))
    loss_d.backward()
    opt_d.step()

    opt_g.zero_grad()
    with D.frozen():
        loss_g = lsgan_g_loss(D(fake))
        nce = multilayer_nce(model, sim_b, fake, int(patch_rng.integers(2 ** 63)))
        total = loss_g + cfg.lambda_nce * nce
        nce_id_value = 0.0
        if cfg.lambda_nce_identity > 0:
            idt = G(real_b)
            nce_id = multilayer_nce(model, real_b, idt, int(patch_rng.integers(2 ** 63)))
            total = total + cfg.lambda_nce_identity * nce_id
            nce_id_value = nce_id.item()
        total.backward()
    opt_g.step()

    return LossRecord(iteration, loss_d.item(), loss_g.item(), nce.item(), nce_id_value)


def train_cut(
    sim_dataset: Sequence[Image2D | np.ndarray],
    real_dataset: Sequence[Image2D | np.ndarray],
    gen_spec: GeneratorSpec | None = None,
    disc_spec: DiscriminatorSpec | None = None,
    config: TranslatorConfig | None = None,
    *,
    checkpoint_path: str | Path | None = None,
) -> tuple[TrainedModel, list[LossRecord]]:
    """Alternate D and G(+heads) Adam steps for config.iterations steps.

    Deterministic for a fixed seed and thread count. On a numeric failure the
    last finite state is written to ``checkpoint_path`` (if given) and the
    NumericError propagates.
    """
    gen_spec = gen_spec or GeneratorSpec()
    disc_spec = disc_spec or DiscriminatorSpec()
    config = config or TranslatorConfig()
    problems = gen_spec.validate() + disc_spec.validate() + config.validate()
    if problems:
        raise ConfigError(problems)
    sim = _as_stack(sim_dataset, "sim")
    real = _as_stack(real_dataset, "real")
    if sim.shape[1:] != real.shape[1:]:
        raise ShapeError(f"sim images are {sim.shape[1:]}, real images are {real.shape[1:]}")

    model = build_model(gen_spec, disc_spec, config)
    records: list[LossRecord] = []
    if config.iterations == 0:
        return model, records

    opt_d = T.Adam(model.discriminator.parameters(), config.lr, config.beta1, config.beta2)
    g_params = {f"G.{k}": v for k, v in model.generator.parameters().items()}
    g_params.update({f"H.{k}": v for k, v in model.heads.parameters().items()})
    opt_g = T.Adam(g_params, config.lr, config.beta1, config.beta2)

    batch_rng = rng_for(config.seed, "translate.batches")
    patch_rng = rng_for(config.seed, "translate.patches")
    budget = TrainingBudget(config.iterations, config.max_seconds)
    progress = TrainingProgress(config.iterations, title="translate", every=config.log_every, logger=log)
    log.info("translate: training %d iterations on %d sim / %d real images (G %d params, D %d params)",
             config.iterations, len(sim), len(real), model.generator.n_parameters(),
             model.discriminator.n_parameters())

    last_good = model.state_dict()
    while not budget.exceeded:
        iteration = budget.iterations + 1
        try:
            record = _train_step(model, sim, real, opt_d, opt_g, batch_rng, patch_rng, iteration)
        except NumericError:
            if checkpoint_path is not None:
                save_model(model, checkpoint_path, state=last_good)
                log.error("translate: numeric failure at iteration %d; last good state saved to %s",
                          iteration, checkpoint_path)
            raise
        records.append(record)
        budget.record()
        model.iterations = iteration
        last_good = model.state_dict()
        progress.update(iteration, loss_D=record.loss_D, loss_G=record.loss_G,
                        nce=record.loss_NCE, nce_id=record.loss_NCE_id)

    if budget.stopped_early:
        log.warning("translate: %s", budget.exceeded_message)
    progress.close()
    return model, records


def write_loss_log(records: Sequence[LossRecord], path: str | Path) -> Path:
    lines = [",".join(f.name for f in fields(LossRecord))]
    for r in records:
        lines.append(f"{r.iteration},{r.loss_D!r},{r.loss_G!r},{r.loss_NCE!r},{r.loss_NCE_id!r}")
    return artifacts.atomic_write_text(path, "\n".join(lines) + "\n")


# ── Inference ────────────────────────────────────────────────────────────────

def translate_batch(model: TrainedModel, images: Sequence[Image2D]) -> list[Image2D]:
    """Run the generator on each image; provenance gains "sim2real:<model-id>"."""
    model_id = model.model_id
    out = []
    with T.no_grad():
        for img in images:
            y = model.generator(Tensor(img.pixels[None, None]))
            out.append(img.derive(y.data[0, 0].astype(np.float64), f"sim2real:{model_id}", translated_by=model_id))
    return out


@dataclass(frozen=True)
class ContentPreservation:
    translated_mad: float
    swapped_mad: float
    n_images: int

    @property
    def preserved(self) -> bool:
        return self.translated_mad < self.swapped_mad


def content_preservation(
    sim: Sequence[Image2D],
    translated: Sequence[Image2D],
    real: Sequence[Image2D],
    masks: Sequence[np.ndarray],
    seed: int = 0,
) -> ContentPreservation:
    """Mean |sim - G(sim)| inside each heart mask vs |sim - random real| in the same region."""
    if not (len(sim) == len(translated) == len(masks)) or not sim:
        raise ValueError("sim, translated and masks must be non-empty and the same length")
    if not real:
        raise ValueError("real set is empty")
    rng = rng_for(seed, "translate.content")
    kept, swapped = [], []
    for s, t, m in zip(sim, translated, masks):
        m = np.asarray(m, dtype=bool)
        r = real[int(rng.integers(len(real)))]
        if not (s.pixels.shape == t.pixels.shape == r.pixels.shape == m.shape):
            raise ShapeError("content preservation needs equal image and mask dims")
        if not m.any():
            continue
        kept.append(float(np.abs(s.pixels - t.pixels)[m].mean()))
        swapped.append(float(np.abs(s.pixels - r.pixels)[m].mean()))
    if not kept:
        raise ValueError("every mask is empty")
    return ContentPreservation(float(np.mean(kept)), float(np.mean(swapped)), len(kept))
