"""
feature_extractors.py — Extractor selection and capability metadata.

The Fréchet distance needs an image → vector map. Pretrained networks are out
of reach here, so two self-contained extractors are provided; the rest of the
code depends on the FeatureExtractor protocol and create_extractor() instead
of constructing either one directly.

Absolute distances are only comparable between runs that share extractor kind
and seed (the extractor identity recorded in every report).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

import tensor as T
from seeds import rng_for

HIST_BINS = 32


class FeatureExtractor(Protocol):
    kind: str
    seed: int

    @property
    def dim(self) -> int:
        ...

    @property
    def identity(self) -> str:
        ...

    def extract(self, images: Sequence[np.ndarray]) -> np.ndarray:
        """[n, ny, nx] images in [0, 1] → [n, dim] feature matrix."""
        ...


@dataclass(frozen=True)
class ExtractorCapabilities:
    kind: str
    dim: int
    seeded: bool
    notes: str = ""


_CAPABILITIES = {
    "random_conv": ExtractorCapabilities(
        kind="random_conv",
        dim=8 + 16 + 32,
        seeded=True,
        notes="Frozen random 3-layer strided conv stack, global average pooled per layer.",
    ),
    "pixel_stats": ExtractorCapabilities(
        kind="pixel_stats",
        dim=HIST_BINS + 4,
        seeded=False,
        notes="32-bin intensity histogram + mean, variance, gradient-magnitude mean/std.",
    ),
}


def available_extractors() -> list[str]:
    return sorted(_CAPABILITIES)


def get_extractor_capabilities(kind: str) -> ExtractorCapabilities:
    if kind not in _CAPABILITIES:
        raise ValueError(f"Unsupported extractor '{kind}'. Supported values: {', '.join(available_extractors())}.")
    return _CAPABILITIES[kind]


def _as_batch(images: Sequence[np.ndarray]) -> np.ndarray:
    arrays = [np.asarray(img, dtype=np.float64) for img in images]
    if not arrays:
        return np.zeros((0, 1, 1))
    shape = arrays[0].shape
    for a in arrays:
        if a.ndim != 2 or a.shape != shape:
            raise ValueError(f"images must share 2-D dims: got {a.shape} vs {shape}")
    return np.stack(arrays)


class RandomConvExtractor:
    """Three k4/s2/p1 convolutions with leaky ReLU; weights drawn once from the seed."""

    kind = "random_conv"
    channels = (8, 16, 32)

    def __init__(self, seed: int = 0):
        self.seed = seed
        rng = rng_for(seed, "metrics.random_conv")
        self._weights = []
        in_ch = 1
        for out_ch in self.channels:
            std = np.sqrt(2.0 / (in_ch * 16))
            self._weights.append(rng.normal(0.0, std, (out_ch, in_ch, 4, 4)))
            in_ch = out_ch

    @property
    def dim(self) -> int:
        return sum(self.channels)

    @property
    def identity(self) -> str:
        return f"{self.kind}:{self.seed}"

    def extract(self, images: Sequence[np.ndarray]) -> np.ndarray:
        batch = _as_batch(images)
        if batch.shape[0] == 0:
            return np.zeros((0, self.dim))
        _, h, w = batch.shape
        multiple = 2 ** len(self.channels)
        ph, pw = (-h) % multiple, (-w) % multiple
        x = np.pad(batch, ((0, 0), (0, ph), (0, pw)), mode="edge")[:, None]
        pooled = []
        with T.no_grad(), T.precision("float64"):
            act = T.Tensor(x)
            for weight in self._weights:
                act = T.leaky_relu(T.conv2d(act, T.Tensor(weight), stride=2, pad=1), 0.2)
                pooled.append(act.data.mean(axis=(2, 3)))
        return np.concatenate(pooled, axis=1)


class PixelStatsExtractor:
    kind = "pixel_stats"

    def __init__(self, seed: int = 0):
        self.seed = seed

    @property
    def dim(self) -> int:
        return HIST_BINS + 4

    @property
    def identity(self) -> str:
        return self.kind

    def extract(self, images: Sequence[np.ndarray]) -> np.ndarray:
        batch = _as_batch(images)
        rows = []
        for img in batch:
            hist, _ = np.histogram(np.clip(img, 0.0, 1.0), bins=HIST_BINS, range=(0.0, 1.0))
            gy, gx = np.gradient(img)
            mag = np.hypot(gx, gy)
            rows.append(np.concatenate([hist / img.size, [img.mean(), img.var(), mag.mean(), mag.std()]]))
        return np.asarray(rows).reshape(len(rows), self.dim)


def create_extractor(kind: str, seed: int = 0) -> FeatureExtractor:
    get_extractor_capabilities(kind)
    if kind == "random_conv":
        return RandomConvExtractor(seed)
    return PixelStatsExtractor(seed)
