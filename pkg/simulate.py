"""
simulate.py — Analytical steady-state MR signal simulation on label slices.

Pipeline per slice: label → per-pixel tissue properties (with per-subject
variation) → closed-form SPGR or on-resonance bSSFP signal → complex k-space
noise → magnitude image. The pulse-by-pulse Bloch recursions at the bottom are
reference oracles for the closed forms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy import ndimage

import artifacts
from artifacts import MalformedHeaderError, PayloadMismatchError
from errors import Sim2RealError
from phantom import (
    LabelSlice,
    Phase,
    TissueClass,
    VirtualSubjectSpec,
    extract_midventricular_slices,
    generate_virtual_subject,
)
from seeds import derive_seed

log = logging.getLogger(__name__)


class SimulationError(Sim2RealError, ValueError):
    pass


class UnmappedTissueError(SimulationError):
    def __init__(self, tissue_id: int):
        self.tissue_id = tissue_id
        super().__init__(f"unmapped tissue class {tissue_id}")


# ── Data model ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TissueProperties:
    t1: float        # ms
    t2: float        # ms
    t2_star: float   # ms
    pd: float

    def __post_init__(self):
        if not 0 < self.t2_star <= self.t2 <= self.t1:
            raise SimulationError(
                f"tissue properties need 0 < t2* <= t2 <= t1 (got t1={self.t1}, t2={self.t2}, t2*={self.t2_star})"
            )
        if not 0 < self.pd <= 1.2:
            raise SimulationError(f"proton density must lie in (0, 1.2] (got {self.pd})")


def default_tissue_table() -> dict[TissueClass, TissueProperties]:
    """Literature-typical 1.5 T values. Configuration defaults, not ground truth."""
    blood = TissueProperties(t1=1550.0, t2=240.0, t2_star=180.0, pd=0.95)
    return {
        TissueClass.MYOCARDIUM: TissueProperties(t1=950.0, t2=50.0, t2_star=35.0, pd=0.8),
        TissueClass.LV_BLOOD: blood,
        TissueClass.RV_BLOOD: blood,
        TissueClass.LUNG: TissueProperties(t1=1300.0, t2=40.0, t2_star=10.0, pd=0.2),
        TissueClass.BODY: TissueProperties(t1=800.0, t2=45.0, t2_star=30.0, pd=0.7),
    }


@dataclass(frozen=True, eq=False)
class PropertyMaps:
    t1: np.ndarray
    t2: np.ndarray
    t2_star: np.ndarray
    pd: np.ndarray

    @property
    def dims(self) -> tuple[int, int]:
        ny, nx = self.pd.shape
        return nx, ny


class SequenceKind(str, Enum):
    SPGR = "SPGR"
    BSSFP = "bSSFP"


@dataclass(frozen=True)
class SequenceParams:
    kind: SequenceKind = SequenceKind.BSSFP
    tr: float = 3.0          # ms
    te: float = 1.5          # ms
    flip_deg: float = 45.0
    noise_sd: float = 0.02   # fraction of peak signal
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", SequenceKind(self.kind))
        if not 0 < self.te < self.tr:
            raise SimulationError(f"sequence needs 0 < te < tr (got te={self.te}, tr={self.tr})")
        if not 0 < self.flip_deg < 180:
            raise SimulationError(f"flip angle must lie in (0, 180) degrees (got {self.flip_deg})")
        if self.noise_sd < 0:
            raise SimulationError(f"noise_sd must be >= 0 (got {self.noise_sd})")

    def describe(self) -> str:
        return f"{self.kind.value} tr={self.tr:g} te={self.te:g} flip={self.flip_deg:g}"


@dataclass(frozen=True, eq=False)
class Image2D:
    pixels: np.ndarray                          # float64, shape (ny, nx)
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise SimulationError(f"image must be a non-empty 2-D array, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise SimulationError("image contains non-finite pixels")
        meta = dict(self.meta)
        meta["history"] = list(meta.get("history", []))
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "meta", meta)

    @property
    def dims(self) -> tuple[int, int]:
        ny, nx = self.pixels.shape
        return nx, ny

    @property
    def history(self) -> list[str]:
        return list(self.meta["history"])

    def derive(self, pixels: np.ndarray, step: str, **meta) -> "Image2D":
        """New image with the same provenance plus one history step."""
        merged = {**self.meta, **meta, "history": [*self.meta["history"], step]}
        return Image2D(pixels, merged)


# ── Properties ───────────────────────────────────────────────────────────────

def assign_tissue_properties(
    slice_: LabelSlice,
    table: Mapping[TissueClass, TissueProperties],
    variation_pct: float,
    seed: int,
) -> PropertyMaps:
    """Broadcast per-class properties to pixels, perturbing each class once.

    Each of t1/t2/t2*/pd is scaled by an independent uniform factor in
    [1 - variation_pct, 1 + variation_pct]. Perturbed values are clipped so
    that t2* <= t2 <= t1 and pd <= 1.2 still hold.
    """
    if not 0 <= variation_pct <= 0.3:
        raise SimulationError(f"variation_pct must lie in [0, 0.3] (got {variation_pct})")
    table = {TissueClass(k): v for k, v in table.items()}
    shape = slice_.labels.shape
    maps = {name: np.ones(shape) for name in ("t1", "t2", "t2_star")}
    maps["pd"] = np.zeros(shape)

    rng = np.random.default_rng(seed)
    present = sorted(int(t) for t in np.unique(slice_.labels))
    for tid in present:
        if tid == TissueClass.BACKGROUND:
            continue
        tissue = TissueClass(tid)
        if tissue not in table:
            raise UnmappedTissueError(tid)
    # One draw per class in id order, whether or not present, so adding a class
    # to a slice never shifts another class's factors.
    for tissue in sorted(table, key=int):
        if tissue == TissueClass.BACKGROUND:
            continue
        factors = rng.uniform(1.0 - variation_pct, 1.0 + variation_pct, size=4)
        if int(tissue) not in present:
            continue
        props = table[tissue]
        t1 = props.t1 * factors[0]
        t2 = min(props.t2 * factors[1], t1)
        t2s = min(props.t2_star * factors[2], t2)
        pd = min(props.pd * factors[3], 1.2)
        mask = slice_.labels == int(tissue)
        maps["t1"][mask] = t1
        maps["t2"][mask] = t2
        maps["t2_star"][mask] = t2s
        maps["pd"][mask] = pd
    return PropertyMaps(**maps)


# ── Signal models ────────────────────────────────────────────────────────────

def signal_spgr(props: PropertyMaps, seq: SequenceParams) -> Image2D:
    """S = pd sin(a) (1 - E1) / (1 - cos(a) E1) exp(-te/t2*), E1 = exp(-tr/t1)."""
    if seq.kind is not SequenceKind.SPGR:
        raise SimulationError(f"signal_spgr needs an SPGR sequence, got {seq.kind.value}")
    alpha = math.radians(seq.flip_deg)
    e1 = np.exp(-seq.tr / props.t1)
    s = props.pd * math.sin(alpha) * (1.0 - e1) / (1.0 - math.cos(alpha) * e1)
    s = s * np.exp(-seq.te / props.t2_star)
    s[props.pd == 0] = 0.0
    return Image2D(s, {"sequence": seq.describe(), "history": [f"signal:{seq.kind.value}"]})


def signal_bssfp(props: PropertyMaps, seq: SequenceParams) -> Image2D:
    """On-resonance bSSFP with alternating RF phase.

    S = pd sin(a) (1 - E1) / (1 - (E1 - E2) cos(a) - E1 E2) exp(-te/t2)
    """
    if seq.kind is not SequenceKind.BSSFP:
        raise SimulationError(f"signal_bssfp needs a bSSFP sequence, got {seq.kind.value}")
    alpha = math.radians(seq.flip_deg)
    e1 = np.exp(-seq.tr / props.t1)
    e2 = np.exp(-seq.tr / props.t2)
    s = props.pd * math.sin(alpha) * (1.0 - e1) / (1.0 - (e1 - e2) * math.cos(alpha) - e1 * e2)
    s = s * np.exp(-seq.te / props.t2)
    s[props.pd == 0] = 0.0
    return Image2D(s, {"sequence": seq.describe(), "history": [f"signal:{seq.kind.value}"]})


def signal(props: PropertyMaps, seq: SequenceParams) -> Image2D:
    if seq.kind is SequenceKind.SPGR:
        return signal_spgr(props, seq)
    return signal_bssfp(props, seq)


def inject_kspace_noise(img: Image2D, noise_sd: float, seed: int) -> Image2D:
    """Add complex Gaussian noise in k-space and return the magnitude image.

    Per-component k-space sd is noise_sd * peak * sqrt(nx * ny), i.e. noise_sd *
    peak per component in image space. An all-zero image uses a peak of 1 so
    the noise level stays defined.
    """
    if noise_sd < 0:
        raise SimulationError(f"noise_sd must be >= 0 (got {noise_sd})")
    px = img.pixels
    peak = float(np.max(np.abs(px)))
    if peak == 0.0:
        peak = 1.0
    ny, nx = px.shape
    kspace = np.fft.fft2(px)
    sd = noise_sd * peak * math.sqrt(nx * ny)
    if sd > 0:
        rng = np.random.default_rng(seed)
        kspace = kspace + rng.normal(0.0, sd, kspace.shape) + 1j * rng.normal(0.0, sd, kspace.shape)
    out = np.abs(np.fft.ifft2(kspace))
    return img.derive(out, f"noise:{noise_sd:g}")


def texturize(
    img: Image2D,
    seed: int,
    *,
    texture_sd: float = 0.08,
    correlation_px: float = 1.5,
    gradient_strength: float = 0.35,
) -> Image2D:
    """Procedural scanner-like appearance: correlated noise plus an intensity ramp.

    Used to build the toy "real" domain from simulated anatomy.
    """
    rng = np.random.default_rng(seed)
    px = img.pixels
    ny, nx = px.shape
    peak = float(px.max()) or 1.0

    angle = rng.uniform(0.0, 2.0 * math.pi)
    yy, xx = np.mgrid[0:ny, 0:nx]
    ramp = (np.cos(angle) * (xx / max(nx - 1, 1) - 0.5) + np.sin(angle) * (yy / max(ny - 1, 1) - 0.5))
    bias = 1.0 + gradient_strength * 2.0 * ramp

    noise = ndimage.gaussian_filter(rng.normal(0.0, 1.0, px.shape), correlation_px, mode="wrap")
    std = float(noise.std())
    if std > 0:
        noise = noise / std
    textured = px * bias + texture_sd * peak * noise * (px > 0.05 * peak)
    return img.derive(np.clip(textured, 0.0, None), f"texture:{texture_sd:g}")


# ── Composition ──────────────────────────────────────────────────────────────

def simulate_slice(
    slice_: LabelSlice,
    seq: SequenceParams,
    table: Mapping[TissueClass, TissueProperties],
    variation_pct: float,
    seed: int,
) -> Image2D:
    key = (slice_.subject_id, slice_.phase.value, slice_.slice_index)
    props = assign_tissue_properties(slice_, table, variation_pct, derive_seed(seed, "simulate.properties", *key))
    img = signal(props, seq)
    img = inject_kspace_noise(img, seq.noise_sd, derive_seed(seed, "simulate.noise", *key))
    meta = {
        "subject": slice_.subject_id,
        "phase": slice_.phase.value,
        "slice_index": slice_.slice_index,
        "spacing": list(slice_.spacing),
        "sequence": seq.describe(),
    }
    history = [f"phantom:{slice_.subject_id}", f"slice:{slice_.phase.value}:z{slice_.slice_index}",
               f"properties:var={variation_pct:g}", *img.history]
    return Image2D(img.pixels, {**meta, "history": history})


def simulate_subject(
    spec: VirtualSubjectSpec,
    seq: SequenceParams,
    table: Mapping[TissueClass, TissueProperties],
    variation_pct: float,
    *,
    dims: tuple[int, int, int] = (128, 128, 40),
    spacing: tuple[float, float, float] = (1.5, 1.5, 4.0),
    n_slices: int = 4,
    seed: int | None = None,
) -> list[tuple[Image2D, LabelSlice]]:
    """generate → slice → properties → signal → noise, for ED then ES."""
    seed = seq.seed if seed is None else seed
    pairs = []
    for vol in generate_virtual_subject(spec, dims, spacing):
        for sl in extract_midventricular_slices(vol, n_slices):
            pairs.append((simulate_slice(sl, seq, table, variation_pct, seed), sl))
    log.debug("simulate: %s → %d images", spec.subject_id, len(pairs))
    return pairs


# ── Bloch recursion references ───────────────────────────────────────────────

def bloch_recursion_spgr(pd, t1, t2_star, tr, te, flip_deg, *, min_pulses: int = 200,
                         tol: float = 1e-14, max_pulses: int = 200_000) -> np.ndarray:
    """Pulse-by-pulse spoiled steady state: Mz <- Mz cos a, then T1 recovery over tr."""
    pd, t1, t2_star = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (pd, t1, t2_star)))
    alpha = math.radians(flip_deg)
    e1 = np.exp(-tr / t1)
    mz = np.ones_like(t1)
    for n in range(max_pulses):
        nxt = mz * math.cos(alpha) * e1 + (1.0 - e1)
        done = n >= min_pulses and np.max(np.abs(nxt - mz)) < tol
        mz = nxt
        if done:
            break
    return pd * mz * math.sin(alpha) * np.exp(-te / t2_star)


def bloch_recursion_bssfp(pd, t1, t2, tr, te, flip_deg, *, tol: float = 1e-13,
                          max_pulses: int = 200_000) -> np.ndarray:
    """On-resonance bSSFP steady state with RF phase alternating every TR.

    Iterates rotation about x by +/-a and relaxation over tr until the
    post-pulse transverse magnitude stops changing, then decays it to te.
    """
    pd, t1, t2 = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (pd, t1, t2)))
    alpha = math.radians(flip_deg)
    e1 = np.exp(-tr / t1)
    e2 = np.exp(-tr / t2)
    my = np.zeros_like(t1)
    mz = np.ones_like(t1)
    last = np.full_like(t1, np.inf)
    sign = 1.0
    transverse = my
    for _ in range(max_pulses):
        a = sign * alpha
        my, mz = my * math.cos(a) + mz * math.sin(a), -my * math.sin(a) + mz * math.cos(a)
        transverse = np.abs(my)
        if np.max(np.abs(transverse - last)) < tol:
            break
        last = transverse
        my = my * e2
        mz = mz * e1 + (1.0 - e1)
        sign = -sign
    return pd * transverse * np.exp(-te / t2)


# ── Files ────────────────────────────────────────────────────────────────────

def _json_safe(meta: Mapping[str, Any]) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (np.floating,)):
            v = float(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[str(k)] = v
    return out


def save_image(img: Image2D, path: str | Path) -> Path:
    header = {"kind": "image2d", "dims": list(img.dims), "dtype": "float32le", "meta": _json_safe(img.meta)}
    payload = img.pixels.astype("<f4").tobytes(order="C")
    return artifacts.write(path, header, payload)


def load_image(path: str | Path) -> Image2D:
    header, payload = artifacts.read(path, kind="image2d")
    nx, ny = artifacts.header_field(header, "dims", 2, int)
    if min(nx, ny) <= 0:
        raise MalformedHeaderError(f"dims must be positive, got {[nx, ny]}")
    if header.get("dtype") != "float32le":
        raise MalformedHeaderError(f"unsupported pixel dtype {header.get('dtype')!r}")
    if len(payload) != nx * ny * 4:
        raise PayloadMismatchError(f"dims/payload mismatch: dims need {nx * ny * 4} bytes, payload has {len(payload)}")
    pixels = np.frombuffer(payload, dtype="<f4").reshape(ny, nx).astype(np.float64)
    meta = header.get("meta") or {}
    if not isinstance(meta, dict):
        raise MalformedHeaderError("'meta' must be a mapping")
    return Image2D(pixels, meta)


def load_image_dir(directory: str | Path) -> list[tuple[str, Image2D]]:
    """Every *.img in a directory as (stem, image), sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"image directory not found: {directory}")
    return [(p.stem, load_image(p)) for p in sorted(directory.glob("*.img"))]


def export_pgm(img: Image2D, path: str | Path) -> Path:
    """16-bit binary PGM, linearly rescaled to [0, 65535] for viewing."""
    px = img.pixels
    lo, hi = float(px.min()), float(px.max())
    scaled = np.zeros_like(px) if hi == lo else (px - lo) / (hi - lo)
    data = np.round(scaled * 65535.0).astype(">u2")
    nx, ny = img.dims
    header = f"P5\n{nx} {ny}\n65535\n".encode("ascii")
    return artifacts.atomic_write_bytes(path, header + data.tobytes(order="C"))


