"""
preprocess.py — Crop / resize / normalise protocol shared by both domains.

Simulated path: heart bounding box (from labels) → crop → resize → [0, 1].
Real path:      resize → centre crop → [0, 1].
Both end at (width, height) = (128, 126) by default.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from errors import Sim2RealError
from phantom import LabelSlice
from simulate import Image2D

log = logging.getLogger(__name__)

DEFAULT_WIDTH = 128
DEFAULT_HEIGHT = 126


class PreprocessError(Sim2RealError, ValueError):
    pass


class EmptyHeartMaskError(PreprocessError):
    pass


class CropExceedsImageError(PreprocessError):
    pass


@dataclass(frozen=True)
class CropRect:
    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise PreprocessError(f"crop rect needs positive size, got {self.width}x{self.height}")
        if self.x0 < 0 or self.y0 < 0:
            raise PreprocessError(f"crop rect origin must be non-negative, got ({self.x0}, {self.y0})")

    def fits(self, dims: tuple[int, int]) -> bool:
        nx, ny = dims
        return self.x0 + self.width <= nx and self.y0 + self.height <= ny

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.height), slice(self.x0, self.x0 + self.width)


# ── Geometry ─────────────────────────────────────────────────────────────────

def bbox_from_labels(slice_: LabelSlice, margin_px: int) -> CropRect:
    """Tightest rect around heart-class pixels, grown by margin_px and clamped."""
    if margin_px < 0:
        raise PreprocessError(f"margin must be >= 0 (got {margin_px})")
    ys, xs = np.nonzero(slice_.heart_mask())
    if xs.size == 0:
        raise EmptyHeartMaskError(f"empty heart mask in {slice_.name}")
    nx, ny = slice_.dims
    x0 = max(int(xs.min()) - margin_px, 0)
    y0 = max(int(ys.min()) - margin_px, 0)
    x1 = min(int(xs.max()) + margin_px, nx - 1)
    y1 = min(int(ys.max()) + margin_px, ny - 1)
    return CropRect(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def crop(img: Image2D, rect: CropRect) -> Image2D:
    if not rect.fits(img.dims):
        raise CropExceedsImageError(f"crop exceeds image: {rect} on {img.dims}")
    rows, cols = rect.slices()
    return img.derive(img.pixels[rows, cols], f"crop:{rect.x0},{rect.y0},{rect.width},{rect.height}")


def center_crop(img: Image2D, out_w: int = DEFAULT_WIDTH, out_h: int = DEFAULT_HEIGHT) -> Image2D:
    nx, ny = img.dims
    if nx < out_w or ny < out_h:
        raise CropExceedsImageError(f"crop exceeds image: {out_w}x{out_h} from {nx}x{ny}")
    return crop(img, CropRect((nx - out_w) // 2, (ny - out_h) // 2, out_w, out_h))


def _sample_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel-centred source coordinates for one axis."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img: Image2D, out_w: int, out_h: int) -> Image2D:
    if out_w <= 0 or out_h <= 0:
        raise PreprocessError(f"resize target must be positive, got {out_w}x{out_h}")
    nx, ny = img.dims
    x0, x1, wx = _sample_axis(nx, out_w)
    y0, y1, wy = _sample_axis(ny, out_h)
    p = img.pixels
    top = p[np.ix_(y0, x0)] * (1.0 - wx) + p[np.ix_(y0, x1)] * wx
    bottom = p[np.ix_(y1, x0)] * (1.0 - wx) + p[np.ix_(y1, x1)] * wx
    out = top * (1.0 - wy)[:, None] + bottom * wy[:, None]
    scale = (out_w / nx, out_h / ny)
    meta = {"resize_scale": list(scale)}
    if "spacing" in img.meta:
        sx, sy = img.meta["spacing"]
        meta["spacing"] = [sx / scale[0], sy / scale[1]]
    return img.derive(out, f"resize:{out_w}x{out_h}", **meta)


def resize_nearest(labels: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    ny, nx = labels.shape
    xs = np.minimum(np.floor((np.arange(out_w) + 0.5) * (nx / out_w)).astype(np.intp), nx - 1)
    ys = np.minimum(np.floor((np.arange(out_h) + 0.5) * (ny / out_h)).astype(np.intp), ny - 1)
    return labels[np.ix_(ys, xs)]


def normalize01(img: Image2D) -> Image2D:
    """(p - min) / (max - min); a constant image maps to zeros."""
    p = img.pixels
    lo, hi = float(p.min()), float(p.max())
    out = np.zeros_like(p) if hi == lo else (p - lo) / (hi - lo)
    return img.derive(out, "normalize01")


# ── Pipelines ────────────────────────────────────────────────────────────────

def _check_target(out_w: int, out_h: int) -> None:
    if out_w <= 0 or out_h <= 0:
        raise PreprocessError(f"target dims must be positive, got {out_w}x{out_h}")


def preprocess_sim(
    img: Image2D,
    labels: LabelSlice,
    margin: int = 8,
    out_w: int = DEFAULT_WIDTH,
    out_h: int = DEFAULT_HEIGHT,
) -> Image2D:
    _check_target(out_w, out_h)
    if img.dims != labels.dims:
        raise PreprocessError(f"image dims {img.dims} do not match label dims {labels.dims}")
    rect = bbox_from_labels(labels, margin)
    return normalize01(resize_bilinear(crop(img, rect), out_w, out_h))


def preprocess_labels_sim(
    labels: LabelSlice,
    margin: int = 8,
    out_w: int = DEFAULT_WIDTH,
    out_h: int = DEFAULT_HEIGHT,
) -> LabelSlice:
    """The label slice resampled exactly like its image in preprocess_sim."""
    _check_target(out_w, out_h)
    rect = bbox_from_labels(labels, margin)
    rows, cols = rect.slices()
    resized = resize_nearest(labels.labels[rows, cols], out_w, out_h)
    sx, sy = labels.spacing
    spacing = (sx * rect.width / out_w, sy * rect.height / out_h)
    return LabelSlice(resized, spacing, labels.phase, labels.slice_index, labels.subject_id)


def cover_size(dims: tuple[int, int], out_w: int, out_h: int) -> tuple[int, int]:
    """Smallest aspect-preserving size that still covers (out_w, out_h)."""
    nx, ny = dims
    scale = max(out_w / nx, out_h / ny)
    return max(out_w, int(round(nx * scale))), max(out_h, int(round(ny * scale)))


def preprocess_real(
    img: Image2D,
    out_w: int = DEFAULT_WIDTH,
    out_h: int = DEFAULT_HEIGHT,
    resize_to: tuple[int, int] | None = None,
) -> Image2D:
    _check_target(out_w, out_h)
    w, h = resize_to if resize_to is not None else cover_size(img.dims, out_w, out_h)
    return normalize01(center_crop(resize_bilinear(img, w, h), out_w, out_h))
