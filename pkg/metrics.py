"""
metrics.py — Realism gap and segmentation agreement.

    gaussian_stats / matrix_sqrt_psd / frechet_distance   feature-distribution distance
    dice / hausdorff                                      per-tissue mask agreement
    evaluate_realism / evaluate_segmentation              directory-level reports (CSV)

FID here uses a pluggable extractor (feature_extractors.py), so absolute
values are NOT comparable with Inception-based FID; only orderings are.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, ndimage
from scipy.spatial.distance import cdist

import artifacts
from errors import Sim2RealError
from feature_extractors import FeatureExtractor
from phantom import HEART_CLASSES, TissueClass, load_label_slice
from simulate import Image2D, load_image_dir

log = logging.getLogger(__name__)

MIN_REALISM_IMAGES = 10
NEGATIVE_CLAMP = -1e-6
SYMMETRY_TOL = 1e-8


class MetricError(Sim2RealError, ValueError):
    pass


class FrechetError(MetricError):
    pass


class EmptyMaskError(MetricError):
    pass


# ── Feature statistics ───────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class FeatureStats:
    n: int
    mu: np.ndarray
    sigma: np.ndarray
    extractor: str = ""

    @property
    def dim(self) -> int:
        return int(self.mu.shape[0])


def extract_features(images: Sequence[Image2D | np.ndarray], extractor: FeatureExtractor) -> np.ndarray:
    arrays = [img.pixels if isinstance(img, Image2D) else np.asarray(img) for img in images]
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise MetricError(f"images must share dims, got {sorted(shapes)}")
    return extractor.extract(arrays)


def gaussian_stats(vectors: np.ndarray | Sequence[np.ndarray], extractor: str = "") -> FeatureStats:
    """Sample mean and unbiased covariance.

    Rows are put in lexicographic order first, so the result is bit-identical
    under any permutation of the input.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise MetricError(f"need at least 2 feature vectors, got {x.shape[0] if x.ndim else 0}")
    x = x[np.lexsort(x.T[::-1])]
    n = x.shape[0]
    mu = x.sum(axis=0) / n
    centred = x - mu
    sigma = centred.T @ centred / (n - 1)
    return FeatureStats(n, mu, (sigma + sigma.T) / 2.0, extractor)


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise FrechetError(f"matrix must be square, got {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > SYMMETRY_TOL:
        raise FrechetError(f"matrix is not symmetric (max |m - m^T| = {asym:.3g})")
    try:
        w, v = linalg.eigh((m + m.T) / 2.0)
    except linalg.LinAlgError as exc:
        raise FrechetError(f"square root did not converge: {exc}") from exc
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return (root + root.T) / 2.0


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    if a.dim != b.dim:
        raise FrechetError(f"feature dims differ: {a.dim} vs {b.dim}")
    if a.extractor != b.extractor:
        raise FrechetError(f"extractor mismatch: {a.extractor!r} vs {b.extractor!r}")
    diff = a.mu - b.mu
    root_a = matrix_sqrt_psd(a.sigma)
    inner = root_a @ b.sigma @ root_a
    cross = matrix_sqrt_psd((inner + inner.T) / 2.0)
    value = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * np.trace(cross))
    if value < 0.0:
        if value < NEGATIVE_CLAMP:
            raise FrechetError(f"Fréchet distance came out negative ({value:.3g})")
        value = 0.0
    return value


# ── Masks ────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Mask2D:
    mask: np.ndarray                            # bool, shape (ny, nx)
    tissue: str = ""
    spacing: tuple[float, float] = (1.0, 1.0)  # (sx, sy) mm

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        if self.mask.ndim != 2:
            raise MetricError(f"mask must be 2-D, got shape {self.mask.shape}")

    @property
    def dims(self) -> tuple[int, int]:
        ny, nx = self.mask.shape
        return nx, ny

    def boundary(self) -> np.ndarray:
        """Mask pixels with at least one 4-neighbour outside the mask (or the image)."""
        return self.mask & ~ndimage.binary_erosion(self.mask, border_value=0)


def _check_pair(a: Mask2D, b: Mask2D) -> None:
    if a.dims != b.dims:
        raise MetricError(f"mask dims differ: {a.dims} vs {b.dims}")
    if a.tissue != b.tissue:
        raise MetricError(f"mask classes differ: {a.tissue!r} vs {b.tissue!r}")


def dice(a: Mask2D, b: Mask2D) -> float:
    _check_pair(a, b)
    total = int(a.mask.sum()) + int(b.mask.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a.mask & b.mask).sum()) / total


def hausdorff(a: Mask2D, b: Mask2D, percentile: float = 100.0) -> float:
    """Symmetric boundary-to-boundary distance in mm over pixel centres."""
    _check_pair(a, b)
    if tuple(a.spacing) != tuple(b.spacing):
        raise MetricError(f"mask spacings differ: {a.spacing} vs {b.spacing}")
    if not 0.0 < percentile <= 100.0:
        raise MetricError(f"percentile must be in (0, 100], got {percentile}")
    if not a.mask.any() or not b.mask.any():
        raise EmptyMaskError("undefined HD for empty mask")
    scale = np.asarray(a.spacing, dtype=np.float64)
    pa = np.argwhere(a.boundary())[:, ::-1] * scale
    pb = np.argwhere(b.boundary())[:, ::-1] * scale
    d = cdist(pa, pb)
    a_to_b, b_to_a = d.min(axis=1), d.min(axis=0)
    if percentile == 100.0:
        return float(max(a_to_b.max(), b_to_a.max()))
    return float(max(np.percentile(a_to_b, percentile), np.percentile(b_to_a, percentile)))


# ── Reports ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FidRow:
    comparison: str
    fid: float
    n_a: int
    n_b: int
    extractor: str


@dataclass(frozen=True)
class SegRow:
    case: str
    tissue: str
    dice: float
    hausdorff_mm: float


def realism_report(
    sim: Sequence[Image2D],
    real: Sequence[Image2D],
    translated: Sequence[Image2D] | None,
    extractor: FeatureExtractor,
) -> list[FidRow]:
    sets = {"sim": sim, "real": real}
    if translated is not None:
        sets["translated"] = translated
    for name, images in sets.items():
        if len(images) < MIN_REALISM_IMAGES:
            raise MetricError(f"{name} set has {len(images)} images; need at least {MIN_REALISM_IMAGES}")
    dims = {img.dims for images in sets.values() for img in images}
    if len(dims) > 1:
        raise MetricError(f"all images must share dims, got {sorted(dims)}")

    ident = extractor.identity
    stats = {name: gaussian_stats(extract_features(images, extractor), ident) for name, images in sets.items()}
    rows = [FidRow("sim_vs_real", frechet_distance(stats["sim"], stats["real"]), stats["sim"].n, stats["real"].n, ident)]
    if "translated" in stats:
        rows.append(FidRow("translated_vs_real", frechet_distance(stats["translated"], stats["real"]),
                           stats["translated"].n, stats["real"].n, ident))
    for r in rows:
        log.info("metrics: FID %s = %.6f (n=%d/%d, %s)", r.comparison, r.fid, r.n_a, r.n_b, r.extractor)
    return rows


def evaluate_realism(
    sim_dir: str | Path,
    real_dir: str | Path,
    translated_dir: str | Path | None,
    extractor: FeatureExtractor,
) -> list[FidRow]:
    def images(d):
        return [img for _, img in load_image_dir(d)]

    translated = images(translated_dir) if translated_dir is not None else None
    return realism_report(images(sim_dir), images(real_dir), translated, extractor)


def write_fid_csv(rows: Sequence[FidRow], path: str | Path) -> Path:
    lines = [",".join(f.name for f in fields(FidRow))]
    for r in rows:
        lines.append(f"{r.comparison},{r.fid:.10g},{r.n_a},{r.n_b},{r.extractor}")
    return artifacts.atomic_write_text(path, "\n".join(lines) + "\n")


SEG_TISSUES = tuple(sorted(HEART_CLASSES))


def evaluate_segmentation(pred_dir: str | Path, gt_dir: str | Path, percentile: float = 100.0) -> list[SegRow]:
    """Per-case, per-tissue Dice and HD for every *.lbl present in both directories.

    A tissue absent from either mask gets HD = nan; per-tissue "mean" rows
    average over the finite values.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gt_files = {p.stem: p for p in sorted(gt_dir.glob("*.lbl"))}
    pred_files = {p.stem: p for p in sorted(pred_dir.glob("*.lbl"))}
    cases = sorted(set(gt_files) & set(pred_files))
    if not cases:
        raise MetricError(f"no matching .lbl files in {pred_dir} and {gt_dir}")
    missing = sorted(set(gt_files) - set(pred_files))
    if missing:
        log.warning("metrics: %d ground-truth cases have no prediction (e.g. %s)", len(missing), missing[0])

    rows: list[SegRow] = []
    for case in cases:
        pred, gt = load_label_slice(pred_files[case]), load_label_slice(gt_files[case])
        if pred.dims != gt.dims:
            raise MetricError(f"{case}: prediction dims {pred.dims} != ground truth dims {gt.dims}")
        for tissue in SEG_TISSUES:
            name = TissueClass(tissue).label
            a = Mask2D(pred.mask(tissue), name, gt.spacing)
            b = Mask2D(gt.mask(tissue), name, gt.spacing)
            try:
                hd = hausdorff(a, b, percentile)
            except EmptyMaskError:
                hd = math.nan
            rows.append(SegRow(case, name, dice(a, b), hd))

    for tissue in SEG_TISSUES:
        name = TissueClass(tissue).label
        subset = [r for r in rows if r.tissue == name]
        finite = [r.hausdorff_mm for r in subset if not math.isnan(r.hausdorff_mm)]
        rows.append(SegRow("mean", name, float(np.mean([r.dice for r in subset])),
                           float(np.mean(finite)) if finite else math.nan))
    return rows


def write_seg_csv(rows: Sequence[SegRow], path: str | Path) -> Path:
    lines = [",".join(f.name for f in fields(SegRow))]
    for r in rows:
        lines.append(f"{r.case},{r.tissue},{r.dice:.10g},{r.hausdorff_mm:.10g}")
    return artifacts.atomic_write_text(path, "\n".join(lines) + "\n")
