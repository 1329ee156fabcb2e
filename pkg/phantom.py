"""
phantom.py — Procedural virtual-subject cardiac label volumes.

Stands in for a licensed anthropomorphic phantom: the LV is an ellipsoidal blood
pool wrapped in a myocardial shell, the RV a crescent hugging the LV epicardium,
all embedded in an elliptic body with two lungs. Externally produced label
volumes in the same file format can be ingested instead.

Array layout: voxels[z, y, x] (C order, so x is fastest on disk).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np
from scipy import ndimage

import artifacts
from artifacts import ArtifactFormatError, MalformedHeaderError, PayloadMismatchError
from errors import Sim2RealError
from seeds import derive_seed, rng_for

log = logging.getLogger(__name__)


# ── Tissue classes ───────────────────────────────────────────────────────────

class TissueClass(IntEnum):
    BACKGROUND = 0
    BODY = 1
    LUNG = 2
    MYOCARDIUM = 3
    LV_BLOOD = 4
    RV_BLOOD = 5

    @property
    def label(self) -> str:
        return self.name.lower()


HEART_CLASSES = frozenset({TissueClass.MYOCARDIUM, TissueClass.LV_BLOOD, TissueClass.RV_BLOOD})
TISSUE_TABLE = {int(t): t.label for t in TissueClass}
_MAX_ID = max(TISSUE_TABLE)

ES_SHORTENING = 0.92           # long-axis shortening of the LV cavity at ES
EF_MAX = 0.9


class Phase(str, Enum):
    ED = "ED"
    ES = "ES"


# ── Errors ───────────────────────────────────────────────────────────────────

class PhantomError(Sim2RealError, ValueError):
    pass


class AnatomyError(PhantomError):
    pass


class AnatomyOutOfBoundsError(AnatomyError):
    def __init__(self, structure: str, detail: str = ""):
        self.structure = structure
        super().__init__(f"anatomy out of bounds: {structure}" + (f" ({detail})" if detail else ""))


class DegenerateAnatomyError(AnatomyError):
    pass


class InsufficientVentricularExtentError(PhantomError):
    pass


class UnknownTissueError(ArtifactFormatError):
    pass


# ── Data model ───────────────────────────────────────────────────────────────

def _check_ids(voxels: np.ndarray) -> None:
    if voxels.size and int(voxels.max()) > _MAX_ID:
        bad = sorted(set(np.unique(voxels).tolist()) - set(TISSUE_TABLE))
        raise UnknownTissueError(f"unknown tissue id(s): {bad}")


@dataclass(frozen=True, eq=False)
class LabelVolume:
    voxels: np.ndarray                       # uint8, shape (nz, ny, nx)
    spacing: tuple[float, float, float]      # (sx, sy, sz) mm
    phase: Phase
    subject_id: str = ""

    def __post_init__(self):
        vox = np.ascontiguousarray(self.voxels, dtype=np.uint8)
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "phase", Phase(self.phase))
        if vox.ndim != 3:
            raise PhantomError(f"label volume must be 3-D, got shape {vox.shape}")
        nx, ny, nz = self.dims
        if nx < 16 or ny < 16 or nz < 4:
            raise PhantomError(f"label volume dims {self.dims} below minimum (16, 16, 4)")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise PhantomError(f"spacing must be three positive values, got {self.spacing}")
        _check_ids(vox)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.voxels.shape
        return nx, ny, nz

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelVolume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.phase == other.phase
            and self.subject_id == other.subject_id
            and self.voxels.shape == other.voxels.shape
            and np.array_equal(self.voxels, other.voxels)
        )


@dataclass(frozen=True, eq=False)
class LabelSlice:
    labels: np.ndarray                # uint8, shape (ny, nx)
    spacing: tuple[float, float]      # (sx, sy) mm
    phase: Phase
    slice_index: int
    subject_id: str = ""

    def __post_init__(self):
        lab = np.ascontiguousarray(self.labels, dtype=np.uint8)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "phase", Phase(self.phase))
        if lab.ndim != 2 or lab.size == 0:
            raise PhantomError(f"label slice must be a non-empty 2-D array, got shape {lab.shape}")
        if len(self.spacing) != 2 or min(self.spacing) <= 0:
            raise PhantomError(f"slice spacing must be two positive values, got {self.spacing}")
        _check_ids(lab)

    @property
    def dims(self) -> tuple[int, int]:
        ny, nx = self.labels.shape
        return nx, ny

    @property
    def name(self) -> str:
        return f"{self.subject_id or 'slice'}_{self.phase.value}_z{self.slice_index:03d}"

    def mask(self, tissue: TissueClass) -> np.ndarray:
        return self.labels == int(tissue)

    def heart_mask(self) -> np.ndarray:
        return np.isin(self.labels, [int(t) for t in HEART_CLASSES])

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelSlice):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.phase == other.phase
            and self.slice_index == other.slice_index
            and self.subject_id == other.subject_id
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class VirtualSubjectSpec:
    subject_id: str
    lv_radius_ed: float
    lv_radius_es: float
    myo_thickness_ed: float
    myo_thickness_es: float
    rv_scale: float = 1.0
    global_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        lengths = {
            "lv_radius_ed": self.lv_radius_ed,
            "lv_radius_es": self.lv_radius_es,
            "myo_thickness_ed": self.myo_thickness_ed,
            "myo_thickness_es": self.myo_thickness_es,
            "rv_scale": self.rv_scale,
            "global_scale": self.global_scale,
        }
        for name, value in lengths.items():
            if not value > 0:
                raise DegenerateAnatomyError(f"{self.subject_id}: {name} must be > 0 (got {value})")
        if not self.lv_radius_es < self.lv_radius_ed:
            raise DegenerateAnatomyError(
                f"{self.subject_id}: lv_radius_es ({self.lv_radius_es}) must be < lv_radius_ed ({self.lv_radius_ed})"
            )
        ef = nominal_ejection_fraction(self.lv_radius_ed, self.lv_radius_es)
        if not ef < EF_MAX:
            raise DegenerateAnatomyError(
                f"{self.subject_id}: radii give an ejection fraction of {ef:.3f}, must be < {EF_MAX}"
            )
        if self.myo_thickness_es < self.myo_thickness_ed:
            raise DegenerateAnatomyError(
                f"{self.subject_id}: myo_thickness_es must be >= myo_thickness_ed (wall thickening at ES)"
            )
        if not 0 <= self.seed < 2 ** 64:
            raise DegenerateAnatomyError(f"{self.subject_id}: seed must fit in an unsigned 64-bit integer")


def nominal_ejection_fraction(lv_radius_ed: float, lv_radius_es: float) -> float:
    """EF of the continuous ellipsoids, before voxelisation.

    Every LV semi-axis scales with the radius and the ES long axis is
    shortened by ES_SHORTENING, so shape jitter and global_scale cancel.
    """
    return 1.0 - ES_SHORTENING * (lv_radius_es / lv_radius_ed) ** 3


# ── Geometry ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class _Ellipsoid:
    name: str
    center: tuple[float, float, float]     # mm, relative to volume centre
    axes: tuple[float, float, float]       # semi-axes along the rotated x/y and z
    theta: float = 0.0                     # in-plane rotation, radians

    def contains(self, x, y, z) -> np.ndarray:
        dx, dy, dz = x - self.center[0], y - self.center[1], z - self.center[2]
        c, s = math.cos(self.theta), math.sin(self.theta)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        a, b, h = self.axes
        return (u / a) ** 2 + (v / b) ** 2 + (dz / h) ** 2 <= 1.0

    def half_extent(self) -> tuple[float, float, float]:
        a, b, h = self.axes
        c, s = math.cos(self.theta), math.sin(self.theta)
        return math.hypot(a * c, b * s), math.hypot(a * s, b * c), h


def _grid(dims, spacing):
    nx, ny, nz = dims
    sx, sy, sz = spacing
    x = (np.arange(nx) - (nx - 1) / 2.0) * sx
    y = (np.arange(ny) - (ny - 1) / 2.0) * sy
    z = (np.arange(nz) - (nz - 1) / 2.0) * sz
    return x[None, None, :], y[None, :, None], z[:, None, None]


def _check_inside(shape: _Ellipsoid, dims, spacing, *, infinite_z: bool = False) -> None:
    limits = [(n - 1) / 2.0 * s for n, s in zip(dims, spacing)]
    ext = shape.half_extent()
    for axis, (c, e, lim) in enumerate(zip(shape.center, ext, limits)):
        if infinite_z and axis == 2:
            continue
        if abs(c) + e > lim:
            raise AnatomyOutOfBoundsError(
                shape.name, f"axis {'xyz'[axis]} reaches {abs(c) + e:.1f} mm, limit {lim:.1f} mm"
            )


@dataclass(frozen=True)
class _Anatomy:
    """Seed-derived shape jitter shared by both phases of one subject."""

    heart_center: tuple[float, float, float]
    long_axis_ratio: float
    ellipticity: float
    rv_angle: float
    body_axes: tuple[float, float]

    @classmethod
    def draw(cls, spec: VirtualSubjectSpec) -> "_Anatomy":
        rng = np.random.default_rng(spec.seed)
        center = tuple(float(v) for v in rng.uniform([-4.0, -4.0, -3.0], [4.0, 4.0, 3.0]))
        return cls(
            heart_center=center,
            long_axis_ratio=float(rng.uniform(1.6, 2.0)),
            ellipticity=float(rng.uniform(0.9, 1.1)),
            rv_angle=float(math.pi + rng.uniform(-0.3, 0.3)),
            body_axes=(84.0 * float(rng.uniform(0.97, 1.03)), 68.0 * float(rng.uniform(0.97, 1.03))),
        )


def _structures(spec: VirtualSubjectSpec, anatomy: _Anatomy, phase: Phase) -> dict[str, _Ellipsoid]:
    gs = spec.global_scale
    if phase is Phase.ED:
        r, t, shorten = spec.lv_radius_ed * gs, spec.myo_thickness_ed * gs, 1.0
    else:
        r, t, shorten = spec.lv_radius_es * gs, spec.myo_thickness_es * gs, ES_SHORTENING
    h = r * anatomy.long_axis_ratio * shorten
    lv_axes = (r, r * anatomy.ellipticity, h)
    epi_axes = tuple(a + t for a in lv_axes)
    c = anatomy.heart_center
    cos, sin = math.cos(anatomy.rv_angle), math.sin(anatomy.rv_angle)
    reach = epi_axes[0]
    rv_center = (c[0] + 0.55 * reach * cos, c[1] + 0.55 * reach * sin, c[2])
    rv_axes = (spec.rv_scale * reach, spec.rv_scale * reach * 1.3, epi_axes[2] * 0.9)
    return {
        "lv_blood": _Ellipsoid("lv_blood", c, lv_axes),
        "myocardium": _Ellipsoid("myocardium", c, epi_axes),
        "rv_blood": _Ellipsoid("rv_blood", rv_center, rv_axes, anatomy.rv_angle),
    }


def _render(spec, anatomy, phase, dims, spacing) -> np.ndarray:
    shapes = _structures(spec, anatomy, phase)
    body = _Ellipsoid("body", (0.0, 0.0, 0.0), (*anatomy.body_axes, math.inf))
    for shape in shapes.values():
        _check_inside(shape, dims, spacing)
    _check_inside(body, dims, spacing, infinite_z=True)

    x, y, z = _grid(dims, spacing)
    nx, ny, nz = dims
    vox = np.zeros((nz, ny, nx), dtype=np.uint8)
    bx, by = anatomy.body_axes
    in_body = np.broadcast_to((x / bx) ** 2 + (y / by) ** 2 <= 1.0, vox.shape)
    vox[in_body] = TissueClass.BODY
    for side in (-1.0, 1.0):
        lung = _Ellipsoid("lung", (side * 0.55 * bx, 0.15 * by, 0.0), (0.3 * bx, 0.5 * by, 1.5 * bx))
        vox[lung.contains(x, y, z) & in_body] = TissueClass.LUNG
    vox[shapes["rv_blood"].contains(x, y, z)] = TissueClass.RV_BLOOD
    vox[shapes["myocardium"].contains(x, y, z)] = TissueClass.MYOCARDIUM
    vox[shapes["lv_blood"].contains(x, y, z)] = TissueClass.LV_BLOOD
    return vox


# ── Operations ───────────────────────────────────────────────────────────────

def generate_virtual_subject(
    spec: VirtualSubjectSpec,
    dims: tuple[int, int, int],
    spacing: tuple[float, float, float],
) -> tuple[LabelVolume, LabelVolume]:
    """Render the ED and ES label volumes of one subject. Pure in (spec, dims, spacing)."""
    spec.validate()
    dims = tuple(int(d) for d in dims)
    spacing = tuple(float(s) for s in spacing)
    if len(dims) != 3 or dims[0] < 16 or dims[1] < 16 or dims[2] < 4:
        raise PhantomError(f"dims {dims} below minimum (16, 16, 4)")
    if len(spacing) != 3 or min(spacing) <= 0:
        raise PhantomError(f"spacing must be three positive values, got {spacing}")

    anatomy = _Anatomy.draw(spec)
    volumes = []
    for phase in (Phase.ED, Phase.ES):
        vox = _render(spec, anatomy, phase, dims, spacing)
        for tissue in (TissueClass.LV_BLOOD, TissueClass.MYOCARDIUM, TissueClass.RV_BLOOD):
            if not np.any(vox == tissue):
                raise DegenerateAnatomyError(
                    f"{spec.subject_id}: {tissue.label} vanished at {phase.value} (below voxel resolution)"
                )
        volumes.append(LabelVolume(vox, spacing, phase, spec.subject_id))
    ed, es = volumes
    if lv_volume(ed) <= lv_volume(es):
        raise DegenerateAnatomyError(
            f"{spec.subject_id}: ED/ES contraction is below voxel resolution"
        )
    ef = ejection_fraction(ed, es)
    if not ef < EF_MAX:
        raise DegenerateAnatomyError(f"{spec.subject_id}: rendered ejection fraction {ef:.3f} is not below {EF_MAX}")
    log.debug("phantom: generated %s (EDV %.1f mL, ESV %.1f mL)",
              spec.subject_id, lv_volume(ed), lv_volume(es))
    return ed, es


def lv_volume(vol: LabelVolume) -> float:
    """LV blood-pool volume in mL."""
    count = int(np.count_nonzero(vol.voxels == TissueClass.LV_BLOOD))
    return count * vol.voxel_volume_mm3 / 1000.0


def ejection_fraction(ed: LabelVolume, es: LabelVolume) -> float:
    edv = lv_volume(ed)
    if edv == 0:
        raise PhantomError("ejection fraction undefined for an empty ED blood pool")
    return (edv - lv_volume(es)) / edv


def myocardial_coverage(vol: LabelVolume) -> float:
    """Fraction of LV blood boundary voxels with a 6-neighbour in the myocardium."""
    lv = vol.voxels == TissueClass.LV_BLOOD
    if not lv.any():
        return 0.0
    structure = ndimage.generate_binary_structure(3, 1)
    boundary = lv & ~ndimage.binary_erosion(lv, structure, border_value=0)
    near_myo = ndimage.binary_dilation(vol.voxels == TissueClass.MYOCARDIUM, structure)
    return float(np.count_nonzero(boundary & near_myo)) / float(np.count_nonzero(boundary))


def extract_midventricular_slices(vol: LabelVolume, n: int) -> list[LabelSlice]:
    """The n axial slices centred on the LV blood z-centroid, ascending z.

    The window starts at floor(centroid - (n - 1) / 2), which breaks ties
    toward lower z.
    """
    if n < 1:
        raise PhantomError(f"slice count must be >= 1 (got {n})")
    zs = np.nonzero(vol.voxels == TissueClass.LV_BLOOD)[0]
    if zs.size == 0:
        raise InsufficientVentricularExtentError("insufficient ventricular extent: no lv_blood voxels")
    centroid = float(zs.mean())
    start = math.floor(centroid - (n - 1) / 2.0)
    nz = vol.voxels.shape[0]
    sx, sy, _ = vol.spacing
    slices = []
    for z in range(start, start + n):
        plane = vol.voxels[z] if 0 <= z < nz else None
        if plane is None or not (plane == TissueClass.LV_BLOOD).any() or not (plane == TissueClass.MYOCARDIUM).any():
            raise InsufficientVentricularExtentError(
                f"insufficient ventricular extent: need {n} slices around z={centroid:.2f}, "
                f"slice {z} has no LV blood pool and myocardium"
            )
        slices.append(LabelSlice(plane.copy(), (sx, sy), vol.phase, z, vol.subject_id))
    return slices


# ── Population ───────────────────────────────────────────────────────────────

_SPEC_FIELDS = (
    "lv_radius_ed",
    "lv_radius_es",
    "myo_thickness_ed",
    "myo_thickness_es",
    "rv_scale",
    "global_scale",
)


def _default_ranges() -> dict[str, tuple[float, float]]:
    return {
        "lv_radius_ed": (22.0, 28.0),
        "lv_radius_es": (14.0, 20.0),
        "myo_thickness_ed": (6.0, 9.0),
        "myo_thickness_es": (10.0, 13.0),
        "rv_scale": (0.8, 1.2),
        "global_scale": (0.9, 1.1),
    }


@dataclass(frozen=True)
class PopulationSpec:
    n_subjects: int = 16
    id_prefix: str = "subj"
    ranges: dict[str, tuple[float, float]] = field(default_factory=_default_ranges)

    def validate(self) -> list[str]:
        problems = []
        if self.n_subjects < 1:
            problems.append("n_subjects must be >= 1")
        for name in _SPEC_FIELDS:
            if name not in self.ranges:
                problems.append(f"ranges.{name} is missing")
                continue
            lo, hi = self.ranges[name]
            if not 0 < lo <= hi:
                problems.append(f"ranges.{name} must satisfy 0 < low <= high (got {lo}, {hi})")
        if problems:
            return problems
        if self.ranges["lv_radius_es"][1] >= self.ranges["lv_radius_ed"][0]:
            problems.append("ranges.lv_radius_es must lie entirely below ranges.lv_radius_ed")
        if self.ranges["myo_thickness_es"][0] < self.ranges["myo_thickness_ed"][1]:
            problems.append("ranges.myo_thickness_es must lie entirely above ranges.myo_thickness_ed")
        worst = nominal_ejection_fraction(self.ranges["lv_radius_ed"][1], self.ranges["lv_radius_es"][0])
        if not worst < EF_MAX:
            problems.append(
                f"ranges.lv_radius_es/lv_radius_ed allow an ejection fraction of {worst:.3f}, must stay below {EF_MAX}"
            )
        return problems


def sample_population(pop: PopulationSpec, master_seed: int) -> list[VirtualSubjectSpec]:
    """Draw each subject's fields uniformly from the configured ranges."""
    problems = pop.validate()
    if problems:
        raise DegenerateAnatomyError("; ".join(problems))
    subjects = []
    for i in range(pop.n_subjects):
        rng = rng_for(master_seed, "phantom.population", i)
        values = {name: float(rng.uniform(*pop.ranges[name])) for name in _SPEC_FIELDS}
        subjects.append(VirtualSubjectSpec(
            subject_id=f"{pop.id_prefix}{i:03d}",
            seed=derive_seed(master_seed, "phantom.anatomy", i),
            **values,
        ))
    return subjects


@dataclass(frozen=True)
class VolumeRecord:
    subject_id: str
    edv_ml: float
    esv_ml: float
    ef: float


def volume_statistics(pairs: list[tuple[LabelVolume, LabelVolume]]) -> list[VolumeRecord]:
    return [
        VolumeRecord(ed.subject_id, lv_volume(ed), lv_volume(es), ejection_fraction(ed, es))
        for ed, es in pairs
    ]


def write_volume_csv(records: list[VolumeRecord], path: str | Path) -> Path:
    lines = [",".join(f.name for f in fields(VolumeRecord))]
    for r in records:
        lines.append(f"{r.subject_id},{r.edv_ml:.6f},{r.esv_ml:.6f},{r.ef:.6f}")
    return artifacts.atomic_write_text(path, "\n".join(lines) + "\n")


def read_volume_csv(path: str | Path) -> list[VolumeRecord]:
    with open(path, newline="") as fh:
        return [
            VolumeRecord(row["subject_id"], float(row["edv_ml"]), float(row["esv_ml"]), float(row["ef"]))
            for row in csv.DictReader(fh)
        ]


# ── Files ────────────────────────────────────────────────────────────────────

def _check_tissue_table(header: dict) -> None:
    table = header.get("tissue_classes")
    if not isinstance(table, dict):
        raise MalformedHeaderError("'tissue_classes' table is missing")
    try:
        parsed = {int(k): str(v) for k, v in table.items()}
    except (TypeError, ValueError) as exc:
        raise MalformedHeaderError("'tissue_classes' keys must be integers") from exc
    for tid, name in parsed.items():
        if TISSUE_TABLE.get(tid) != name:
            raise UnknownTissueError(f"tissue class {tid}={name!r} does not match this repository's table")


def _phase(header: dict) -> Phase:
    try:
        return Phase(header.get("phase"))
    except ValueError as exc:
        raise MalformedHeaderError(f"phase must be ED or ES, got {header.get('phase')!r}") from exc


def _positive_spacing(header: dict, n: int) -> tuple:
    spacing = artifacts.header_field(header, "spacing", n)
    if min(spacing) <= 0 or not all(math.isfinite(s) for s in spacing):
        raise MalformedHeaderError(f"spacing must be positive and finite, got {list(spacing)}")
    return spacing


def _labels_from_payload(payload: bytes, shape: tuple[int, ...]) -> np.ndarray:
    expected = int(np.prod(shape))
    if len(payload) != expected:
        raise PayloadMismatchError(f"dims/payload mismatch: dims need {expected} bytes, payload has {len(payload)}")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(shape).copy()
    _check_ids(labels)
    return labels


def save_label_volume(vol: LabelVolume, path: str | Path) -> Path:
    header = {
        "kind": "label_volume",
        "dims": list(vol.dims),
        "spacing": list(vol.spacing),
        "phase": vol.phase.value,
        "subject_id": vol.subject_id,
        "tissue_classes": dict(TISSUE_TABLE),
    }
    return artifacts.write(path, header, vol.voxels.tobytes(order="C"))


def load_label_volume(path: str | Path) -> LabelVolume:
    header, payload = artifacts.read(path, kind="label_volume")
    nx, ny, nz = artifacts.header_field(header, "dims", 3, int)
    if min(nx, ny, nz) <= 0:
        raise MalformedHeaderError(f"dims must be positive, got {[nx, ny, nz]}")
    spacing = _positive_spacing(header, 3)
    phase = _phase(header)
    _check_tissue_table(header)
    voxels = _labels_from_payload(payload, (nz, ny, nx))
    return LabelVolume(voxels, spacing, phase, str(header.get("subject_id") or ""))


def save_label_slice(sl: LabelSlice, path: str | Path) -> Path:
    header = {
        "kind": "label_slice",
        "dims": list(sl.dims),
        "spacing": list(sl.spacing),
        "phase": sl.phase.value,
        "slice_index": sl.slice_index,
        "subject_id": sl.subject_id,
        "tissue_classes": dict(TISSUE_TABLE),
    }
    return artifacts.write(path, header, sl.labels.tobytes(order="C"))


def load_label_slice(path: str | Path) -> LabelSlice:
    header, payload = artifacts.read(path, kind="label_slice")
    nx, ny = artifacts.header_field(header, "dims", 2, int)
    if min(nx, ny) <= 0:
        raise MalformedHeaderError(f"dims must be positive, got {[nx, ny]}")
    spacing = _positive_spacing(header, 2)
    _check_tissue_table(header)
    labels = _labels_from_payload(payload, (ny, nx))
    return LabelSlice(labels, spacing, _phase(header), int(header.get("slice_index", 0)),
                      str(header.get("subject_id") or ""))
