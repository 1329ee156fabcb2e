"""Tests for the procedural phantom (phantom.py).

Covers: LV volume against an analytic sphere, ED/ES contraction over a
sampled population, mid-ventricular slice selection, population sampling,
the volume CSV and the label file codec.
"""

import math

import numpy as np
import pytest

import artifacts
from artifacts import MalformedHeaderError, PayloadMismatchError
from experiment_config import PopulationSection
from phantom import (
    EF_MAX,
    TISSUE_TABLE,
    DegenerateAnatomyError,
    InsufficientVentricularExtentError,
    LabelSlice,
    LabelVolume,
    Phase,
    PhantomError,
    PopulationSpec,
    TissueClass,
    UnknownTissueError,
    VirtualSubjectSpec,
    ejection_fraction,
    extract_midventricular_slices,
    generate_virtual_subject,
    load_label_slice,
    load_label_volume,
    lv_volume,
    myocardial_coverage,
    nominal_ejection_fraction,
    read_volume_csv,
    sample_population,
    save_label_slice,
    save_label_volume,
    volume_statistics,
    write_volume_csv,
)


# ── Helpers ─────────────────────────────────────────────────────────────────

def _sphere_volume(radius_mm: float = 10.0, n: int = 24) -> LabelVolume:
    c = (n - 1) / 2.0
    z, y, x = np.mgrid[0:n, 0:n, 0:n]
    vox = np.zeros((n, n, n), dtype=np.uint8)
    vox[(x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2 <= radius_mm ** 2] = TissueClass.LV_BLOOD
    return LabelVolume(vox, (1.0, 1.0, 1.0), Phase.ED, "sphere")


def _slab_volume(z_lo: int = 10, z_hi: int = 20, nz: int = 30) -> LabelVolume:
    """LV blood in z ∈ [z_lo, z_hi), ringed by myocardium on the same slices."""
    vox = np.zeros((nz, 32, 32), dtype=np.uint8)
    vox[z_lo:z_hi, 10:22, 10:22] = TissueClass.MYOCARDIUM
    vox[z_lo:z_hi, 13:19, 13:19] = TissueClass.LV_BLOOD
    return LabelVolume(vox, (1.0, 1.0, 2.0), Phase.ES, "slab")


def _spec(**overrides) -> VirtualSubjectSpec:
    base = dict(subject_id="s000", lv_radius_ed=25.0, lv_radius_es=18.0,
                myo_thickness_ed=7.0, myo_thickness_es=11.0, seed=7)
    base.update(overrides)
    return VirtualSubjectSpec(**base)


# ── Volumes ─────────────────────────────────────────────────────────────────

def test_sphere_volume_matches_analytic():
    analytic = 4.0 / 3.0 * math.pi * 10.0 ** 3 / 1000.0
    assert lv_volume(_sphere_volume()) == pytest.approx(analytic, rel=0.02)


def test_lv_volume_scales_with_voxel_size():
    vol = _sphere_volume()
    coarse = LabelVolume(vol.voxels, (2.0, 2.0, 2.0), Phase.ED, "sphere")
    assert lv_volume(coarse) == pytest.approx(8.0 * lv_volume(vol))


def test_ejection_fraction_of_empty_ed_raises():
    empty = LabelVolume(np.zeros((8, 16, 16), dtype=np.uint8), (1, 1, 1), Phase.ED)
    with pytest.raises(PhantomError):
        ejection_fraction(empty, empty)


def test_generated_subject_contracts():
    ed, es = generate_virtual_subject(_spec(), (128, 128, 40), (1.5, 1.5, 4.0))
    assert ed.phase is Phase.ED and es.phase is Phase.ES
    assert lv_volume(ed) > lv_volume(es)
    assert 0.0 < ejection_fraction(ed, es) < 1.0
    assert myocardial_coverage(ed) > 0.95


def test_generation_is_pure():
    a = generate_virtual_subject(_spec(), (64, 64, 24), (3.0, 3.0, 6.5))
    b = generate_virtual_subject(_spec(), (64, 64, 24), (3.0, 3.0, 6.5))
    assert a == b


def test_population_ed_exceeds_es():
    section = PopulationSection()
    specs = sample_population(PopulationSpec(30, "p", dict(section.ranges)), master_seed=11)
    assert len(specs) == 30
    for spec in specs:
        ed, es = generate_virtual_subject(spec, section.dims, section.spacing)
        assert lv_volume(ed) > lv_volume(es), spec.subject_id
        assert 0.0 < ejection_fraction(ed, es) < EF_MAX, spec.subject_id


def test_degenerate_spec_rejected():
    with pytest.raises(DegenerateAnatomyError):
        generate_virtual_subject(_spec(lv_radius_es=30.0), (64, 64, 24), (3.0, 3.0, 6.5))
    with pytest.raises(DegenerateAnatomyError):
        generate_virtual_subject(_spec(myo_thickness_ed=0.0), (64, 64, 24), (3.0, 3.0, 6.5))


def test_hyperdynamic_radii_rejected():
    assert nominal_ejection_fraction(25.0, 10.0) >= EF_MAX
    with pytest.raises(DegenerateAnatomyError, match="ejection fraction"):
        generate_virtual_subject(_spec(lv_radius_es=10.0), (128, 128, 40), (1.5, 1.5, 4.0))


def test_anatomy_outside_field_of_view_rejected():
    with pytest.raises(PhantomError, match="out of bounds"):
        generate_virtual_subject(_spec(), (32, 32, 8), (1.0, 1.0, 1.0))


# ── Slices ──────────────────────────────────────────────────────────────────

def test_midventricular_slices_centred_on_centroid():
    slices = extract_midventricular_slices(_slab_volume(), 4)
    assert [s.slice_index for s in slices] == [13, 14, 15, 16]
    assert all(s.phase is Phase.ES and s.subject_id == "slab" for s in slices)
    assert slices[0].spacing == (1.0, 1.0)
    assert slices[0].name == "slab_ES_z013"


def test_slice_extraction_never_returns_fewer():
    with pytest.raises(InsufficientVentricularExtentError):
        extract_midventricular_slices(_slab_volume(), 12)


def test_slice_extraction_without_blood_pool():
    vol = LabelVolume(np.ones((8, 16, 16), dtype=np.uint8), (1, 1, 1), Phase.ED)
    with pytest.raises(InsufficientVentricularExtentError):
        extract_midventricular_slices(vol, 1)


def test_slice_count_must_be_positive():
    with pytest.raises(PhantomError):
        extract_midventricular_slices(_slab_volume(), 0)


def test_heart_mask_covers_heart_classes():
    sl = extract_midventricular_slices(_slab_volume(), 1)[0]
    assert sl.heart_mask().sum() == 12 * 12
    assert sl.mask(TissueClass.LV_BLOOD).sum() == 36


# ── Population ──────────────────────────────────────────────────────────────

def test_population_is_seeded():
    a = sample_population(PopulationSpec(5), 3)
    b = sample_population(PopulationSpec(5), 3)
    c = sample_population(PopulationSpec(5), 4)
    assert a == b
    assert a != c
    assert [s.subject_id for s in a] == ["subj000", "subj001", "subj002", "subj003", "subj004"]


def test_population_ranges_respected():
    pop = PopulationSpec(20)
    for spec in sample_population(pop, 0):
        for name, (lo, hi) in pop.ranges.items():
            assert lo <= getattr(spec, name) <= hi


def test_population_validate_flags_overlapping_radii():
    ranges = dict(PopulationSpec().ranges)
    ranges["lv_radius_es"] = (14.0, 24.0)
    problems = PopulationSpec(4, ranges=ranges).validate()
    assert any("lv_radius_es" in p for p in problems)


def test_population_validate_flags_hyperdynamic_ranges():
    ranges = dict(PopulationSpec().ranges)
    ranges["lv_radius_es"] = (10.0, 20.0)
    problems = PopulationSpec(4, ranges=ranges).validate()
    assert any("ejection fraction" in p for p in problems)
    with pytest.raises(DegenerateAnatomyError):
        sample_population(PopulationSpec(4, ranges=ranges), 0)


def test_default_ranges_keep_ejection_fraction_bounded():
    ranges = PopulationSpec().ranges
    assert nominal_ejection_fraction(ranges["lv_radius_ed"][1], ranges["lv_radius_es"][0]) < EF_MAX
    assert nominal_ejection_fraction(ranges["lv_radius_ed"][0], ranges["lv_radius_es"][1]) > 0.0


def test_volume_csv_round_trip(tmp_path):
    ed, es = generate_virtual_subject(_spec(), (128, 128, 40), (1.5, 1.5, 4.0))
    records = volume_statistics([(ed, es)])
    path = write_volume_csv(records, tmp_path / "volumes.csv")
    back = read_volume_csv(path)
    assert len(back) == 1
    assert back[0].subject_id == "s000"
    assert back[0].edv_ml == pytest.approx(records[0].edv_ml, abs=1e-6)
    assert back[0].ef == pytest.approx(records[0].ef, abs=1e-6)


# ── Files ───────────────────────────────────────────────────────────────────

def test_label_volume_file_round_trip(tmp_path):
    vol = _slab_volume()
    path = save_label_volume(vol, tmp_path / "slab.vol")
    assert load_label_volume(path) == vol


def test_label_slice_file_round_trip(tmp_path):
    sl = extract_midventricular_slices(_slab_volume(), 2)[1]
    path = save_label_slice(sl, tmp_path / "slab.lbl")
    assert load_label_slice(path) == sl


def test_truncated_payload_rejected(tmp_path):
    path = save_label_volume(_slab_volume(), tmp_path / "slab.vol")
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(PayloadMismatchError, match="dims/payload mismatch"):
        load_label_volume(path)


def test_unknown_tissue_in_payload_rejected(tmp_path):
    labels = np.zeros((16, 16), dtype=np.uint8)
    labels[3, 3] = 9
    header = {"kind": "label_slice", "dims": [16, 16], "spacing": [1.0, 1.0], "phase": "ED",
              "slice_index": 0, "subject_id": "x", "tissue_classes": dict(TISSUE_TABLE)}
    path = artifacts.write(tmp_path / "bad.lbl", header, labels.tobytes())
    with pytest.raises(UnknownTissueError):
        load_label_slice(path)


def test_mismatched_tissue_table_rejected(tmp_path):
    path = save_label_slice(extract_midventricular_slices(_slab_volume(), 1)[0], tmp_path / "s.lbl")
    header, payload = artifacts.read(path, kind="label_slice")
    header["tissue_classes"] = {**header["tissue_classes"], 3: "muscle"}
    artifacts.write(path, header, payload)
    with pytest.raises(UnknownTissueError):
        load_label_slice(path)


def test_wrong_kind_rejected(tmp_path):
    path = save_label_volume(_slab_volume(), tmp_path / "slab.vol")
    with pytest.raises(MalformedHeaderError):
        load_label_slice(path)


def test_label_slice_constructor_rejects_unknown_ids():
    with pytest.raises(UnknownTissueError):
        LabelSlice(np.full((4, 4), 42, dtype=np.uint8), (1.0, 1.0), Phase.ED, 0)
