import numpy as np
import pytest

from darkspot.features import (
    CATALOG,
    apply_normalizer,
    assemble_matrix,
    column_names,
    compute_geometric,
    compute_physical,
    compute_textural,
    fit_normalizer,
    load_features,
    load_norm_stats,
    save_features,
    save_norm_stats,
    total_dim,
)
from darkspot.features.texture import OFFSETS, quantize
from darkspot.graph import build_graph
from darkspot.raster import RasterGrid
from darkspot.superpixel import LabelMap


def square_pixels(r0, c0, side):
    ys, xs = np.mgrid[r0:r0 + side, c0:c0 + side]
    return np.stack([ys.ravel(), xs.ravel()], axis=1)


def graph_from_labels(lab, k):
    h, w = lab.shape
    return build_graph(LabelMap(w, h, lab.astype(np.int32), k))


# ---------------------------------------------------------------------------
# catalogue shape
# ---------------------------------------------------------------------------

def test_catalog_has_48_features():
    assert len(CATALOG) == 48
    cats = {c: sum(1 for s in CATALOG if s.category == c) for c in ("geometrical", "physical", "textural")}
    assert cats == {"geometrical": 26, "physical": 20, "textural": 2}


def test_total_dim_matches_column_names():
    assert total_dim() == len(column_names())
    # 44 scalar features plus Hu(7) + Fs(4) + H(6) + EFD(10)
    assert total_dim() == sum(s.dim for s in CATALOG) == 71


def test_multivalued_column_naming():
    names = column_names()
    assert "Hu[0]" in names and "Hu[6]" in names
    assert "EFD[9]" in names
    assert "A" in names and "RIIA" in names


# ---------------------------------------------------------------------------
# geometric features
# ---------------------------------------------------------------------------

def test_square_area_perimeter_circularity():
    g = compute_geometric(square_pixels(5, 5, 10))
    assert g["A"] == 100
    assert g["P"] == 36  # hand count: 4*10 - 4 boundary pixels
    assert g["C"] == pytest.approx(4 * np.pi * 100 / 36 ** 2, rel=1e-12)
    assert g["Cp2"] == pytest.approx(36 ** 2 / 100)
    assert g["Sd"] == pytest.approx(1.0)
    assert g["Rs"] == pytest.approx(1.0)
    assert g["Mr"] == pytest.approx(1.0)
    assert g["IABPm"] == pytest.approx(np.pi / 2)
    assert g["IABPsd"] == pytest.approx(0.0, abs=1e-12)


def test_single_pixel_fallbacks():
    g = compute_geometric(np.array([[3, 4]]))
    assert g["A"] == 1
    assert g["P"] == 1
    assert g["E"] == pytest.approx(1.0)
    assert np.all(np.isfinite(g["Hu"]))
    assert np.all(np.isfinite(g["Fs"]))
    assert np.all(np.isfinite(g["EFD"]))


def test_translation_invariance():
    rng = np.random.default_rng(0)
    base = square_pixels(2, 2, 6)
    keep = rng.random(len(base)) > 0.3
    keep[0] = True
    pix = base[keep]
    # drop pixels that became disconnected from the first one
    a = compute_geometric(pix)
    b = compute_geometric(pix + np.array([7, 11]))
    np.testing.assert_allclose(a["Hu"], b["Hu"], rtol=1e-10)
    np.testing.assert_allclose(a["Fs"], b["Fs"], rtol=1e-10)
    np.testing.assert_allclose(a["EFD"], b["EFD"], rtol=1e-10)
    assert a["A"] == b["A"] and a["P"] == b["P"]
    assert a["C"] == pytest.approx(b["C"])


def test_scale_behavior_of_square():
    small = compute_geometric(square_pixels(0, 0, 12))
    big = compute_geometric(square_pixels(0, 0, 24))
    assert big["A"] == 4 * small["A"]
    assert abs(big["P"] - 2 * small["P"]) <= 4  # 4s-4 boundary pixels: +4 on doubling
    assert abs(big["C"] - small["C"]) / small["C"] <= 0.10


def test_elongation_of_bar():
    g = compute_geometric(square_pixels(0, 0, 3)[:3])  # 1x3 horizontal bar
    assert g["E"] > 1.5
    assert g["L/W"] == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# physical features
# ---------------------------------------------------------------------------

def two_region_scene():
    lab = np.ones((8, 8), dtype=np.int32)
    lab[2:6, 2:6] = 0
    vals = np.full((8, 8), 0.8)
    vals[2:6, 2:6] = 0.2
    return lab, vals


def test_constant_region_physical_values():
    lab, vals = two_region_scene()
    g = graph_from_labels(lab, 2)
    img = RasterGrid.from_array(vals)
    p = compute_physical(0, g, img)
    assert p["Om"] == pytest.approx(0.2)
    assert p["Bm"] == pytest.approx(0.8)
    assert p["Cm"] == pytest.approx(0.6)
    assert p["Osd"] == pytest.approx(0.0)
    assert p["Bsd"] == pytest.approx(0.0)
    assert p["Opm"] == pytest.approx(0.0)
    assert p["RIIA"] == pytest.approx(0.75)
    assert p["IOR"] == pytest.approx(0.25)


def test_isolated_node_background_falls_back_to_tile():
    lab = np.zeros((6, 6), dtype=np.int32)
    g = graph_from_labels(lab, 1)
    rng = np.random.default_rng(1)
    vals = rng.uniform(0.1, 1.0, (6, 6))
    img = RasterGrid.from_array(vals)
    p = compute_physical(0, g, img)
    assert p["Bm"] == pytest.approx(vals.mean())


def test_region_stats_match_two_pass_oracle():
    rng = np.random.default_rng(2)
    lab = rng.integers(0, 4, size=(16, 16)).astype(np.int32)
    lab.flat[:4] = np.arange(4)
    vals = rng.uniform(0.0, 3.0, (16, 16))
    g = graph_from_labels(lab, 4)
    img = RasterGrid.from_array(vals)
    for node in range(4):
        p = compute_physical(node, g, img)
        # independent streaming (two-pass) statistics
        v = [vals[y, x] for y in range(16) for x in range(16) if lab[y, x] == node]
        mean = sum(v) / len(v)
        var = sum((x - mean) ** 2 for x in v) / len(v)
        assert p["Om"] == pytest.approx(mean, abs=1e-9)
        assert p["Osd"] == pytest.approx(np.sqrt(var), abs=1e-9)


# ---------------------------------------------------------------------------
# textural features
# ---------------------------------------------------------------------------

def test_constant_region_glcm():
    lab, vals = two_region_scene()
    g = graph_from_labels(lab, 2)
    img = RasterGrid.from_array(vals)
    t = compute_textural(0, g, img, levels=8)
    contrast, corr, energy, entropy, homog, dissim = t["H"]
    assert energy == pytest.approx(1.0)
    assert contrast == pytest.approx(0.0)
    assert entropy == pytest.approx(0.0, abs=1e-12)


def test_vas_zero_for_equal_areas():
    lab = np.zeros((4, 8), dtype=np.int32)
    lab[:, 2:4] = 1
    lab[:, 4:6] = 2
    lab[:, 6:8] = 3
    g = graph_from_labels(lab, 4)
    img = RasterGrid.from_array(np.ones((4, 8)))
    t = compute_textural(1, g, img)
    assert t["Vas"] == pytest.approx(0.0)


def test_checkerboard_contrast_matches_bruteforce():
    side = 8
    vals = ((np.indices((side, side)).sum(axis=0)) % 2).astype(np.float64)
    lab = np.zeros((side, side), dtype=np.int32)
    g = graph_from_labels(lab, 1)
    img = RasterGrid.from_array(vals)
    t = compute_textural(0, g, img, levels=2)

    # exhaustive pair-count oracle
    q = quantize(vals, 0.0, 1.0, 2)
    stats = []
    for dr, dc in OFFSETS:
        counts = np.zeros((2, 2))
        for y in range(side):
            for x in range(side):
                ny, nx = y + dr, x + dc
                if 0 <= ny < side and 0 <= nx < side:
                    counts[q[y, x], q[ny, nx]] += 1
                    counts[q[ny, nx], q[y, x]] += 1
        p = counts / counts.sum()
        ii, jj = np.meshgrid(np.arange(2), np.arange(2), indexing="ij")
        stats.append((p * (ii - jj) ** 2).sum())
    assert t["H"][0] == pytest.approx(np.mean(stats), abs=1e-12)


def test_tiny_region_texture_is_zero():
    lab = np.ones((4, 4), dtype=np.int32)
    lab[0, 0] = 0
    g = graph_from_labels(lab, 2)
    img = RasterGrid.from_array(np.random.default_rng(0).random((4, 4)))
    t = compute_textural(0, g, img)
    np.testing.assert_array_equal(t["H"], np.zeros(6))


# ---------------------------------------------------------------------------
# assembly and normalization
# ---------------------------------------------------------------------------

def test_assemble_shape_and_determinism():
    lab, vals = two_region_scene()
    g = graph_from_labels(lab, 2)
    img = RasterGrid.from_array(vals)
    m1 = assemble_matrix(g, img)
    m2 = assemble_matrix(g, img)
    assert m1.values.shape == (2, total_dim())
    np.testing.assert_array_equal(m1.values, m2.values)


def test_assemble_permutation_equivariance():
    rng = np.random.default_rng(5)
    lab = rng.integers(0, 3, size=(12, 12)).astype(np.int32)
    lab.flat[:3] = np.arange(3)
    vals = rng.uniform(0.1, 1.0, (12, 12))
    img = RasterGrid.from_array(vals)
    m = assemble_matrix(graph_from_labels(lab, 3), img)
    perm = np.array([2, 0, 1])  # new_label = perm[old_label]
    m2 = assemble_matrix(graph_from_labels(perm[lab], 3), img)
    np.testing.assert_allclose(m2.values[perm[np.arange(3)]], m.values, rtol=1e-12)


def test_no_nan_inf_fuzz():
    for i in range(4):
        rng = np.random.default_rng(60 + i)
        lab = rng.integers(0, 6, size=(20, 20)).astype(np.int32)
        lab.flat[:6] = np.arange(6)
        valid = np.ones((20, 20), dtype=bool)
        vals = rng.gamma(4.0, 0.25, (20, 20))
        img = RasterGrid.from_array(vals, valid)
        m = assemble_matrix(graph_from_labels(lab, 6), img)
        assert np.all(np.isfinite(m.values))


def test_normalizer_basic():
    from darkspot.features import FeatureMatrix
    m = FeatureMatrix(values=np.array([[2.0, 5.0], [4.0, 5.0]]), names=["a", "b"])
    stats = fit_normalizer(m)
    out = apply_normalizer(m, stats)
    np.testing.assert_allclose(out.values[:, 0], [0.0, 1.0])
    np.testing.assert_allclose(out.values[:, 1], [0.0, 0.0])  # constant column


def test_normalizer_clamps_inference():
    from darkspot.features import FeatureMatrix
    train = FeatureMatrix(values=np.array([[0.0], [10.0]]), names=["a"])
    stats = fit_normalizer(train)
    test = FeatureMatrix(values=np.array([[-5.0], [15.0]]), names=["a"])
    out = apply_normalizer(test, stats)
    np.testing.assert_allclose(out.values[:, 0], [0.0, 1.0])


def test_normalizer_preserves_argmax():
    rng = np.random.default_rng(3)
    from darkspot.features import FeatureMatrix
    vals = rng.normal(size=(20, 5))
    m = FeatureMatrix(values=vals, names=[f"c{i}" for i in range(5)])
    out = apply_normalizer(m, fit_normalizer(m))
    for j in range(5):
        assert np.argmax(out.values[:, j]) == np.argmax(vals[:, j])


def test_feature_csv_roundtrip(tmp_path):
    lab, vals = two_region_scene()
    m = assemble_matrix(graph_from_labels(lab, 2), RasterGrid.from_array(vals))
    save_features(m, tmp_path / "f.csv")
    back = load_features(tmp_path / "f.csv")
    assert back.names == m.names
    np.testing.assert_array_equal(back.values, m.values)
    stats = fit_normalizer(m)
    save_norm_stats(stats, m.names, tmp_path / "s.csv")
    s2, names2 = load_norm_stats(tmp_path / "s.csv")
    np.testing.assert_array_equal(s2, stats)
    assert names2 == m.names
