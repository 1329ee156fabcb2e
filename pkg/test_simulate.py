"""Tests for the MR signal simulator (simulate.py).

Covers: tissue property assignment, SPGR/bSSFP closed forms against the
pulse-by-pulse recursions, k-space noise statistics, slice/subject
composition and the image file codec.
"""

import math
from functools import lru_cache

import numpy as np
import pytest

from artifacts import PayloadMismatchError
from phantom import (
    LabelSlice,
    Phase,
    TissueClass,
    VirtualSubjectSpec,
    extract_midventricular_slices,
    generate_virtual_subject,
)
from simulate import (
    Image2D,
    PropertyMaps,
    SequenceKind,
    SequenceParams,
    SimulationError,
    TissueProperties,
    UnmappedTissueError,
    assign_tissue_properties,
    bloch_recursion_bssfp,
    bloch_recursion_spgr,
    default_tissue_table,
    export_pgm,
    inject_kspace_noise,
    load_image,
    load_image_dir,
    save_image,
    signal_bssfp,
    signal_spgr,
    simulate_slice,
    simulate_subject,
    texturize,
)


# ── Helpers ─────────────────────────────────────────────────────────────────

_SPEC = VirtualSubjectSpec("s000", lv_radius_ed=25.0, lv_radius_es=18.0,
                           myo_thickness_ed=7.0, myo_thickness_es=11.0, seed=3)


@lru_cache(maxsize=1)
def _slice() -> LabelSlice:
    ed, _ = generate_virtual_subject(_SPEC, (96, 96, 24), (2.0, 2.0, 6.5))
    return extract_midventricular_slices(ed, 1)[0]


def _maps(pd, t1, t2, t2_star) -> PropertyMaps:
    arrays = np.broadcast_arrays(*(np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in (pd, t1, t2, t2_star)))
    pd, t1, t2, t2_star = (a.copy() for a in arrays)
    return PropertyMaps(t1=t1, t2=t2, t2_star=t2_star, pd=pd)


# Each TR below times 20 (t1, t2) pairs gives 100 grid points per sequence.
SPGR_TRS = (5.0, 10.0, 25.0, 50.0, 100.0)
BSSFP_TRS = (2.5, 3.5, 5.0, 7.0, 10.0)


def _grid():
    """20 (t1, t2) pairs with t2 <= t1; t2* = 0.8 t2."""
    t1, t2 = np.meshgrid(np.linspace(300.0, 2000.0, 4), np.linspace(20.0, 250.0, 5))
    return t1, t2, 0.8 * t2


# ── Properties ──────────────────────────────────────────────────────────────

def test_zero_variation_uses_table_values():
    table = default_tissue_table()
    maps = assign_tissue_properties(_slice(), table, 0.0, seed=1)
    myo = _slice().mask(TissueClass.MYOCARDIUM)
    assert myo.any()
    assert np.all(maps.t1[myo] == table[TissueClass.MYOCARDIUM].t1)
    assert np.all(maps.pd[myo] == table[TissueClass.MYOCARDIUM].pd)


def test_variation_stays_within_bounds():
    table = default_tissue_table()
    sl = _slice()
    maps = assign_tissue_properties(sl, table, 0.1, seed=5)
    for tissue, props in table.items():
        mask = sl.mask(tissue)
        if not mask.any():
            continue
        for name in ("t1", "t2", "t2_star", "pd"):
            values = getattr(maps, name)[mask]
            ref = getattr(props, name)
            assert np.all(values >= 0.9 * ref - 1e-9) and np.all(values <= 1.1 * ref + 1e-9), (tissue, name)
            assert np.unique(values).size == 1


def test_variation_is_seeded():
    table = default_tissue_table()
    a = assign_tissue_properties(_slice(), table, 0.2, seed=9)
    b = assign_tissue_properties(_slice(), table, 0.2, seed=9)
    c = assign_tissue_properties(_slice(), table, 0.2, seed=10)
    assert np.array_equal(a.t1, b.t1)
    assert not np.array_equal(a.t1, c.t1)


def test_background_has_zero_proton_density():
    maps = assign_tissue_properties(_slice(), default_tissue_table(), 0.1, seed=0)
    assert np.all(maps.pd[_slice().labels == TissueClass.BACKGROUND] == 0.0)


def test_variation_out_of_range_rejected():
    with pytest.raises(SimulationError):
        assign_tissue_properties(_slice(), default_tissue_table(), 0.5, seed=0)


def test_unmapped_tissue_rejected():
    table = default_tissue_table()
    del table[TissueClass.LUNG]
    with pytest.raises(UnmappedTissueError) as exc:
        assign_tissue_properties(_slice(), table, 0.0, seed=0)
    assert exc.value.tissue_id == TissueClass.LUNG


def test_tissue_properties_ordering_enforced():
    with pytest.raises(SimulationError):
        TissueProperties(t1=100.0, t2=200.0, t2_star=50.0, pd=0.8)


# ── Signal models ───────────────────────────────────────────────────────────

def test_spgr_reference_value():
    seq = SequenceParams(SequenceKind.SPGR, tr=100.0, te=5.0, flip_deg=30.0, noise_sd=0.0)
    img = signal_spgr(_maps(1.0, 1000.0, 50.0, 50.0), seq)
    assert img.pixels[0, 0] == pytest.approx(0.19898, abs=1e-4)


def test_spgr_saturation_recovery_limit():
    t1 = 800.0
    seq = SequenceParams(SequenceKind.SPGR, tr=100.0 * t1, te=1e-9, flip_deg=90.0, noise_sd=0.0)
    img = signal_spgr(_maps(0.7, t1, 50.0, 40.0), seq)
    assert abs(img.pixels[0, 0] - 0.7) < 1e-10


def test_spgr_matches_recursion_on_grid():
    t1, t2, t2s = _grid()
    for flip in (5.0, 15.0, 30.0, 60.0):
        for tr in SPGR_TRS:
            te = 0.4 * tr
            seq = SequenceParams(SequenceKind.SPGR, tr=tr, te=te, flip_deg=flip, noise_sd=0.0)
            closed = signal_spgr(_maps(0.9, t1, t2, t2s), seq).pixels
            ref = bloch_recursion_spgr(0.9, t1, t2s, tr, te, flip)
            assert np.max(np.abs(closed - ref) / np.abs(ref)) < 1e-3, (flip, tr)


def test_bssfp_matches_recursion_on_grid():
    t1, t2, t2s = _grid()
    for flip in (10.0, 30.0, 45.0, 70.0):
        for tr in BSSFP_TRS:
            te = 0.5 * tr
            seq = SequenceParams(SequenceKind.BSSFP, tr=tr, te=te, flip_deg=flip, noise_sd=0.0)
            closed = signal_bssfp(_maps(0.9, t1, t2, t2s), seq).pixels
            ref = bloch_recursion_bssfp(0.9, t1, t2, tr, te, flip)
            assert np.max(np.abs(closed - ref) / np.abs(ref)) < 1e-3, (flip, tr)


def test_oracle_grid_has_100_points():
    t1, _, _ = _grid()
    assert t1.size * len(SPGR_TRS) == 100
    assert t1.size * len(BSSFP_TRS) == 100


def test_signal_rejects_wrong_sequence_kind():
    with pytest.raises(SimulationError):
        signal_spgr(_maps(1.0, 1000.0, 50.0, 40.0), SequenceParams(SequenceKind.BSSFP))


def test_sequence_timing_validated():
    with pytest.raises(SimulationError):
        SequenceParams(SequenceKind.SPGR, tr=5.0, te=5.0)
    with pytest.raises(SimulationError):
        SequenceParams(SequenceKind.SPGR, flip_deg=180.0)


# ── Noise ───────────────────────────────────────────────────────────────────

def test_noise_on_zero_image_is_rayleigh():
    zero = Image2D(np.zeros((128, 128)))
    means = [inject_kspace_noise(zero, 0.05, seed).pixels.mean() for seed in range(10)]
    expected = 0.05 * math.sqrt(math.pi / 2.0)
    assert float(np.mean(means)) == pytest.approx(expected, rel=0.05)


def test_noise_preserves_energy():
    px = np.zeros((64, 64))
    px[:, :32] = 1.0
    img = Image2D(px)
    ratios = [np.mean(inject_kspace_noise(img, 0.05, seed).pixels ** 2) / np.mean(px ** 2) for seed in range(10)]
    assert float(np.mean(ratios)) == pytest.approx(1.0, rel=0.05)


def test_zero_noise_is_identity():
    px = np.random.default_rng(0).uniform(0.0, 1.0, (32, 40))
    out = inject_kspace_noise(Image2D(px), 0.0, seed=1)
    assert np.allclose(out.pixels, px, atol=1e-12)
    assert out.history[-1] == "noise:0"


def test_noise_is_seeded():
    img = Image2D(np.ones((16, 16)))
    assert np.array_equal(inject_kspace_noise(img, 0.02, 4).pixels, inject_kspace_noise(img, 0.02, 4).pixels)


# ── Composition ─────────────────────────────────────────────────────────────

def test_noiseless_slice_is_piecewise_constant():
    sl = _slice()
    seq = SequenceParams(SequenceKind.BSSFP, noise_sd=0.0)
    img = simulate_slice(sl, seq, default_tissue_table(), 0.0, seed=0)
    values = np.unique(np.round(img.pixels, 9))
    assert values.size <= np.unique(sl.labels).size


def test_simulate_slice_records_provenance():
    img = simulate_slice(_slice(), SequenceParams(), default_tissue_table(), 0.1, seed=2)
    assert img.meta["subject"] == "s000"
    assert img.meta["phase"] == "ED"
    assert img.history[0] == "phantom:s000"
    assert img.history[-1].startswith("noise:")
    assert img.dims == _slice().dims


def test_simulate_slice_is_deterministic():
    a = simulate_slice(_slice(), SequenceParams(), default_tissue_table(), 0.1, seed=2)
    b = simulate_slice(_slice(), SequenceParams(), default_tissue_table(), 0.1, seed=2)
    assert np.array_equal(a.pixels, b.pixels)


def test_simulate_subject_pairs_images_with_slices():
    pairs = simulate_subject(_SPEC, SequenceParams(), default_tissue_table(), 0.05,
                             dims=(96, 96, 24), spacing=(2.0, 2.0, 6.5), n_slices=2)
    assert len(pairs) == 4
    assert [sl.phase for _, sl in pairs] == [Phase.ED, Phase.ED, Phase.ES, Phase.ES]
    for img, sl in pairs:
        assert img.dims == sl.dims
        assert img.meta["slice_index"] == sl.slice_index


def test_texturize_is_seeded_and_non_negative():
    img = simulate_slice(_slice(), SequenceParams(), default_tissue_table(), 0.0, seed=0)
    a, b = texturize(img, 7), texturize(img, 7)
    assert np.array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, img.pixels)
    assert a.pixels.min() >= 0.0
    assert a.history[-1] == "texture:0.08"


# ── Files ───────────────────────────────────────────────────────────────────

def test_image_file_round_trip(tmp_path):
    img = simulate_slice(_slice(), SequenceParams(), default_tissue_table(), 0.1, seed=2)
    back = load_image(save_image(img, tmp_path / "a.img"))
    assert np.array_equal(back.pixels, img.pixels.astype(np.float32).astype(np.float64))
    assert back.history == img.history
    assert back.meta["subject"] == "s000"


def test_image_payload_mismatch_rejected(tmp_path):
    path = save_image(Image2D(np.ones((8, 8))), tmp_path / "a.img")
    path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(PayloadMismatchError):
        load_image(path)


def test_load_image_dir_sorted(tmp_path):
    for name in ("b", "a", "c"):
        save_image(Image2D(np.ones((4, 4))), tmp_path / f"{name}.img")
    assert [stem for stem, _ in load_image_dir(tmp_path)] == ["a", "b", "c"]
    with pytest.raises(FileNotFoundError):
        load_image_dir(tmp_path / "missing")


def test_export_pgm_header(tmp_path):
    path = export_pgm(Image2D(np.arange(12, dtype=float).reshape(3, 4)), tmp_path / "a.pgm")
    data = path.read_bytes()
    assert data.startswith(b"P5\n4 3\n65535\n")
    assert len(data) == len(b"P5\n4 3\n65535\n") + 12 * 2


def test_image_rejects_non_finite():
    with pytest.raises(SimulationError):
        Image2D(np.array([[1.0, np.nan]]))
