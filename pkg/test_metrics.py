"""Tests for realism and segmentation metrics (metrics.py, feature_extractors.py)."""

import math

import numpy as np
import pytest

from feature_extractors import available_extractors, create_extractor, get_extractor_capabilities
from metrics import (
    FeatureStats,
    EmptyMaskError,
    FrechetError,
    Mask2D,
    MetricError,
    dice,
    evaluate_realism,
    evaluate_segmentation,
    frechet_distance,
    gaussian_stats,
    hausdorff,
    matrix_sqrt_psd,
    realism_report,
    write_fid_csv,
    write_seg_csv,
)
from phantom import LabelSlice, Phase, TissueClass, save_label_slice
from simulate import Image2D, save_image


# ── Helpers ─────────────────────────────────────────────────────────────────

def _stats(mu, var, n=10, extractor="x") -> FeatureStats:
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.diag(np.atleast_1d(np.asarray(var, dtype=float)))
    return FeatureStats(n, mu, sigma, extractor)


def _random_stats(rng, d=8, n=50, shift=0.0) -> FeatureStats:
    return gaussian_stats(rng.normal(size=(n, d)) @ rng.normal(size=(d, d)) + shift, "x")


def _mask(shape, *pixels, spacing=(1.0, 1.0)) -> Mask2D:
    m = np.zeros(shape, dtype=bool)
    for x, y in pixels:
        m[y, x] = True
    return Mask2D(m, "myocardium", spacing)


def _brute_boundary(m: np.ndarray) -> list[tuple[int, int]]:
    ny, nx = m.shape
    out = []
    for y in range(ny):
        for x in range(nx):
            if not m[y, x]:
                continue
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                xx, yy = x + dx, y + dy
                if not (0 <= xx < nx and 0 <= yy < ny) or not m[yy, xx]:
                    out.append((x, y))
                    break
    return out


def _brute_hausdorff(a: np.ndarray, b: np.ndarray, spacing) -> float:
    sx, sy = spacing
    pa, pb = _brute_boundary(a), _brute_boundary(b)

    def directed(src, dst):
        return max(min(math.hypot((x1 - x2) * sx, (y1 - y2) * sy) for x2, y2 in dst) for x1, y1 in src)
    return max(directed(pa, pb), directed(pb, pa))


def _images(rng, n, size=24, scale=1.0) -> list[Image2D]:
    return [Image2D(np.clip(rng.normal(0.5, 0.15 * scale, (size, size)), 0.0, 1.0)) for _ in range(n)]


# ── Gaussian statistics ─────────────────────────────────────────────────────

def test_gaussian_stats_hand_computed():
    stats = gaussian_stats([[0.0, 0.0], [2.0, 2.0]])
    assert np.allclose(stats.mu, [1.0, 1.0])
    assert np.allclose(stats.sigma, [[2.0, 2.0], [2.0, 2.0]])
    assert stats.n == 2


def test_gaussian_stats_of_copies_has_zero_covariance():
    stats = gaussian_stats(np.tile([1.0, -3.0, 2.0], (5, 1)))
    assert np.all(stats.sigma == 0.0)


def test_gaussian_stats_permutation_invariant():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 6))
    a, b = gaussian_stats(x), gaussian_stats(x[rng.permutation(30)])
    assert np.array_equal(a.mu, b.mu)
    assert np.array_equal(a.sigma, b.sigma)
    assert np.max(np.abs(a.sigma - a.sigma.T)) < 1e-9


def test_gaussian_stats_needs_two_vectors():
    with pytest.raises(MetricError):
        gaussian_stats([[1.0, 2.0]])


# ── Matrix square root ──────────────────────────────────────────────────────

def test_sqrt_identity_and_diagonal():
    assert np.allclose(matrix_sqrt_psd(np.eye(3)), np.eye(3))
    assert np.allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


@pytest.mark.parametrize("d", [2, 5, 16, 64])
def test_sqrt_reconstructs_random_psd(d):
    rng = np.random.default_rng(d)
    a = rng.normal(size=(d, d))
    m = a.T @ a
    r = matrix_sqrt_psd(m)
    assert np.linalg.norm(r @ r - m) / max(1.0, np.linalg.norm(m)) < 1e-6


def test_sqrt_clamps_negative_eigenvalues():
    r = matrix_sqrt_psd(np.diag([4.0, -1e-12]))
    assert np.allclose(r, np.diag([2.0, 0.0]))


def test_sqrt_rejects_asymmetric():
    with pytest.raises(FrechetError, match="symmetric"):
        matrix_sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


# ── Fréchet distance ────────────────────────────────────────────────────────

def test_frechet_self_distance_is_zero():
    a = _random_stats(np.random.default_rng(1))
    assert abs(frechet_distance(a, a)) < 1e-6


def test_frechet_scalar_closed_form():
    assert abs(frechet_distance(_stats(0.0, 1.0), _stats(1.0, 4.0)) - 2.0) < 1e-10


def test_frechet_diagonal_closed_form():
    rng = np.random.default_rng(2)
    mu_a, mu_b = rng.normal(size=6), rng.normal(size=6)
    var_a, var_b = rng.uniform(0.1, 3.0, 6), rng.uniform(0.1, 3.0, 6)
    expected = float(np.sum((mu_a - mu_b) ** 2) + np.sum((np.sqrt(var_a) - np.sqrt(var_b)) ** 2))
    assert frechet_distance(_stats(mu_a, var_a), _stats(mu_b, var_b)) == pytest.approx(expected, abs=1e-9)


def test_frechet_is_symmetric():
    rng = np.random.default_rng(3)
    a, b = _random_stats(rng), _random_stats(rng)
    assert abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8


def test_frechet_grows_with_mean_shift():
    rng = np.random.default_rng(4)
    base = rng.normal(size=(80, 5))
    ref = gaussian_stats(base, "x")
    values = [frechet_distance(ref, gaussian_stats(base + k * 0.5, "x")) for k in range(1, 6)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_frechet_rejects_mismatches():
    with pytest.raises(FrechetError, match="extractor"):
        frechet_distance(_stats(0.0, 1.0, extractor="a"), _stats(0.0, 1.0, extractor="b"))
    with pytest.raises(FrechetError, match="dims"):
        frechet_distance(_stats([0.0, 0.0], [1.0, 1.0]), _stats(0.0, 1.0))


# ── Dice & Hausdorff ────────────────────────────────────────────────────────

def test_dice_reference_cases():
    a = _mask((4, 4), (0, 0), (1, 0), (2, 0), (3, 0))
    b = _mask((4, 4), (2, 0), (3, 0), (0, 3), (1, 3))
    assert dice(a, b) == 0.5
    assert dice(a, a) == 1.0
    assert dice(a, _mask((4, 4), (0, 2))) == 0.0
    assert dice(_mask((4, 4)), _mask((4, 4))) == 1.0


def test_hausdorff_reference_cases():
    assert hausdorff(_mask((8, 8), (0, 0)), _mask((8, 8), (3, 4))) == 5.0
    a = _mask((3, 3), (0, 0), spacing=(2.0, 2.0))
    b = _mask((3, 3), (1, 1), spacing=(2.0, 2.0))
    assert hausdorff(a, b) == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-12)
    assert hausdorff(a, a) == 0.0


def test_hausdorff_empty_mask_undefined():
    with pytest.raises(EmptyMaskError, match="undefined HD for empty mask"):
        hausdorff(_mask((4, 4), (1, 1)), _mask((4, 4)))


def test_pairwise_metrics_check_dims_and_class():
    with pytest.raises(MetricError):
        dice(_mask((4, 4), (0, 0)), _mask((5, 4), (0, 0)))
    with pytest.raises(MetricError):
        dice(_mask((4, 4), (0, 0)), Mask2D(np.ones((4, 4)), "lv_blood"))


def test_metrics_match_brute_force_oracles():
    rng = np.random.default_rng(5)
    for _ in range(50):
        ny, nx = int(rng.integers(2, 33)), int(rng.integers(2, 33))
        spacing = (float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0)))
        density = rng.uniform(0.05, 0.6)
        a = rng.random((ny, nx)) < density
        b = rng.random((ny, nx)) < density
        a[rng.integers(ny), rng.integers(nx)] = True
        b[rng.integers(ny), rng.integers(nx)] = True
        ma, mb = Mask2D(a, "lv_blood", spacing), Mask2D(b, "lv_blood", spacing)

        inter = sum(1 for y in range(ny) for x in range(nx) if a[y, x] and b[y, x])
        assert dice(ma, mb) == 2.0 * inter / (int(a.sum()) + int(b.sum()))
        assert dice(ma, mb) == dice(mb, ma)
        assert abs(hausdorff(ma, mb) - _brute_hausdorff(a, b, spacing)) < 1e-9
        assert hausdorff(ma, mb) == hausdorff(mb, ma)


def test_hausdorff_percentile_bounded_by_max():
    rng = np.random.default_rng(6)
    a, b = rng.random((20, 20)) < 0.3, rng.random((20, 20)) < 0.3
    ma, mb = Mask2D(a, "t"), Mask2D(b, "t")
    assert hausdorff(ma, mb, 95.0) <= hausdorff(ma, mb)


# ── Extractors ──────────────────────────────────────────────────────────────

@pytest.mark.parametrize("kind", available_extractors())
def test_extractor_is_deterministic(kind):
    imgs = [img.pixels for img in _images(np.random.default_rng(7), 3, size=20)]
    a = create_extractor(kind, 1).extract(imgs)
    b = create_extractor(kind, 1).extract(imgs)
    assert a.shape == (3, get_extractor_capabilities(kind).dim)
    assert np.array_equal(a, b)
    assert np.allclose(a[0], create_extractor(kind, 1).extract([imgs[0]])[0])


def test_pixel_stats_on_constant_image():
    vec = create_extractor("pixel_stats").extract([np.full((16, 16), 0.4)])[0]
    hist = vec[:32]
    assert hist.sum() == pytest.approx(1.0)
    assert np.count_nonzero(hist) == 1
    assert vec[33] == pytest.approx(0.0, abs=1e-12)


def test_random_conv_seeds_differ():
    img = [_images(np.random.default_rng(8), 1, size=32)[0].pixels]
    a = create_extractor("random_conv", 0)
    b = create_extractor("random_conv", 1)
    assert not np.allclose(a.extract(img), b.extract(img))
    assert a.identity == "random_conv:0"


def test_unknown_extractor_rejected():
    with pytest.raises(ValueError, match="Unsupported extractor"):
        create_extractor("inception")


# ── Reports ─────────────────────────────────────────────────────────────────

def test_realism_report_rows():
    rng = np.random.default_rng(9)
    sim, real = _images(rng, 12), _images(rng, 12, scale=2.0)
    rows = realism_report(sim, real, sim, create_extractor("pixel_stats"))
    assert [r.comparison for r in rows] == ["sim_vs_real", "translated_vs_real"]
    assert rows[0].fid == rows[1].fid
    assert rows[0].n_a == 12 and rows[0].extractor == "pixel_stats"


def test_realism_report_self_distance():
    real = _images(np.random.default_rng(10), 12)
    rows = realism_report(_images(np.random.default_rng(11), 12), real, real, create_extractor("pixel_stats"))
    assert rows[1].fid < 0.05


def test_realism_report_needs_ten_images():
    rng = np.random.default_rng(12)
    with pytest.raises(MetricError):
        realism_report(_images(rng, 9), _images(rng, 12), None, create_extractor("pixel_stats"))


def test_evaluate_realism_from_directories(tmp_path):
    rng = np.random.default_rng(13)
    for name, imgs in (("sim", _images(rng, 10)), ("real", _images(rng, 10, scale=2.0))):
        for i, img in enumerate(imgs):
            save_image(img, tmp_path / name / f"{i:02d}.img")
    rows = evaluate_realism(tmp_path / "sim", tmp_path / "real", None, create_extractor("random_conv", 3))
    assert len(rows) == 1 and rows[0].fid > 0.0
    text = write_fid_csv(rows, tmp_path / "fid.csv").read_text().splitlines()
    assert text[0] == "comparison,fid,n_a,n_b,extractor"
    assert text[1].startswith("sim_vs_real,") and text[1].endswith(",10,10,random_conv:3")


def test_evaluate_segmentation(tmp_path):
    lab = np.zeros((20, 20), dtype=np.uint8)
    lab[4:12, 4:12] = TissueClass.MYOCARDIUM
    lab[6:10, 6:10] = TissueClass.LV_BLOOD
    gt = LabelSlice(lab, (1.0, 1.0), Phase.ED, 3, "c")
    shifted = LabelSlice(np.roll(lab, 1, axis=1), (1.0, 1.0), Phase.ED, 3, "c")
    save_label_slice(gt, tmp_path / "gt" / "c1.lbl")
    save_label_slice(gt, tmp_path / "pred" / "c1.lbl")
    save_label_slice(gt, tmp_path / "gt" / "c2.lbl")
    save_label_slice(shifted, tmp_path / "pred" / "c2.lbl")

    rows = evaluate_segmentation(tmp_path / "pred", tmp_path / "gt")
    by_key = {(r.case, r.tissue): r for r in rows}
    assert by_key[("c1", "lv_blood")].dice == 1.0
    assert by_key[("c1", "lv_blood")].hausdorff_mm == 0.0
    assert by_key[("c2", "lv_blood")].hausdorff_mm == 1.0
    assert math.isnan(by_key[("c1", "rv_blood")].hausdorff_mm)
    assert by_key[("c1", "rv_blood")].dice == 1.0
    assert by_key[("mean", "lv_blood")].hausdorff_mm == 0.5
    lines = write_seg_csv(rows, tmp_path / "seg.csv").read_text().splitlines()
    assert lines[0] == "case,tissue,dice,hausdorff_mm"
    assert len(lines) == 1 + 3 * 3


def test_evaluate_segmentation_needs_matching_cases(tmp_path):
    (tmp_path / "pred").mkdir()
    (tmp_path / "gt").mkdir()
    with pytest.raises(MetricError):
        evaluate_segmentation(tmp_path / "pred", tmp_path / "gt")
