import struct

import numpy as np
import pytest

from darkspot.raster import (
    RasterError,
    RasterGrid,
    lee_filter,
    load_grid,
    read_mask,
    save_grid_f32,
    stitch_tiles,
    tile_grid,
    write_mask,
    write_pgm,
)


def lee_oracle(values, valid, window, cu):
    """Independent per-pixel reimplementation of the window statistics."""
    h, w = values.shape
    half = window // 2
    out = values.copy()
    for y in range(h):
        for x in range(w):
            if not valid[y, x]:
                continue
            r0, r1 = max(0, y - half), min(h, y + half + 1)
            c0, c1 = max(0, x - half), min(w, x + half + 1)
            win_vals = values[r0:r1, c0:c1][valid[r0:r1, c0:c1]]
            if win_vals.size < 2:
                continue
            m = win_vals.mean()
            v = win_vals.var()
            if v > 0:
                wgt = min(1.0, max(0.0, (v - (cu * m) ** 2) / v))
            else:
                wgt = 0.0
            out[y, x] = m + wgt * (values[y, x] - m)
    return out


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def test_pgm16_identity_read(tmp_path):
    p = tmp_path / "g.pgm"
    payload = np.array([[0, 100], [200, 65535]], dtype=">u2").tobytes()
    p.write_bytes(b"P5\n2 2\n65535\n" + payload)
    g = load_grid(p, format="pgm16")
    assert g.width == 2 and g.height == 2
    np.testing.assert_array_equal(g.values, [[0.0, 100.0], [200.0, 65535.0]])
    assert g.valid.all()


def test_f32raw_zeros(tmp_path):
    p = tmp_path / "z.f32"
    grid = RasterGrid.from_array(np.zeros((256, 256)))
    save_grid_f32(grid, p)
    g = load_grid(p)
    assert (g.values == 0).all() and g.valid.all()
    assert g.width == g.height == 256


def test_f32raw_rejects_nan(tmp_path):
    p = tmp_path / "bad.f32"
    vals = np.zeros(9, dtype="<f4")
    vals[4] = np.nan
    p.write_bytes(struct.pack("<II", 3, 3) + vals.tobytes())
    with pytest.raises(RasterError, match="non-finite value at index 4"):
        load_grid(p)


def test_f32raw_payload_size_mismatch(tmp_path):
    p = tmp_path / "short.f32"
    p.write_bytes(struct.pack("<II", 4, 4) + b"\x00" * 10)
    with pytest.raises(RasterError, match="payload size"):
        load_grid(p)


def test_pgm_malformed_header(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n2 2\n255\n" + b"\x00" * 12)
    with pytest.raises(RasterError):
        load_grid(p, format="pgm16")


def test_sidecar_mask(tmp_path):
    p = tmp_path / "g.f32"
    grid = RasterGrid.from_array(np.ones((4, 4)))
    save_grid_f32(grid, p)
    mask = np.ones((4, 4), dtype=np.uint8) * 255
    mask[0, 0] = 0
    write_pgm(tmp_path / "g.mask", mask, maxval=255)
    g = load_grid(p)
    assert not g.valid[0, 0]
    assert g.valid.sum() == 15


def test_mask_roundtrip_zeros(tmp_path):
    m = np.zeros((8, 8), dtype=bool)
    write_mask(m, tmp_path / "m.pgm")
    np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), m)


def test_mask_roundtrip_checkerboard(tmp_path):
    m = (np.indices((9, 7)).sum(axis=0) % 2).astype(bool)
    write_mask(m, tmp_path / "m.pgm")
    np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), m)


# ---------------------------------------------------------------------------
# Lee filter
# ---------------------------------------------------------------------------

def test_lee_constant_grid_is_identity():
    g = RasterGrid.from_array(np.full((10, 10), 7.0))
    out = lee_filter(g)
    np.testing.assert_array_equal(out.values, g.values)


def test_lee_zero_variance_identity_is_exact():
    # 7.3 is not exactly representable; the identity must still be bit-exact
    g = RasterGrid.from_array(np.full((6, 6), 7.3))
    out = lee_filter(g)
    assert (out.values == g.values).all()


def test_lee_center_impulse_matches_hand_formula():
    vals = np.zeros((3, 3))
    vals[1, 1] = 100.0
    g = RasterGrid.from_array(vals)
    out = lee_filter(g, window=3, cu=0.25)
    # single-window hand evaluation for the center pixel
    m = 100.0 / 9.0
    v = (100.0 ** 2) / 9.0 - m * m
    wgt = (v - (0.25 * m) ** 2) / v
    expected = m + wgt * (100.0 - m)
    assert out.values[1, 1] == pytest.approx(expected, abs=1e-12)


def test_lee_matches_per_pixel_oracle():
    rng = np.random.default_rng(7)
    vals = rng.uniform(0.0, 10.0, size=(16, 16))
    g = RasterGrid.from_array(vals)
    out = lee_filter(g, window=3, cu=0.25)
    expected = lee_oracle(vals, g.valid, 3, 0.25)
    np.testing.assert_allclose(out.values, expected, atol=1e-9)


def test_lee_with_invalid_pixels_matches_oracle():
    rng = np.random.default_rng(11)
    vals = rng.uniform(0.0, 5.0, size=(12, 12))
    valid = rng.random((12, 12)) > 0.3
    g = RasterGrid.from_array(vals, valid)
    out = lee_filter(g, window=5, cu=0.3)
    expected = lee_oracle(vals, valid, 5, 0.3)
    np.testing.assert_allclose(out.values, expected, atol=1e-9)
    # invalid pixels pass through untouched
    np.testing.assert_array_equal(out.values[~valid], vals[~valid])
    np.testing.assert_array_equal(out.valid, valid)


def test_lee_output_within_window_bounds():
    rng = np.random.default_rng(3)
    vals = rng.uniform(0.0, 1.0, size=(20, 20))
    g = RasterGrid.from_array(vals)
    out = lee_filter(g)
    half = 1
    for y in range(20):
        for x in range(20):
            w = vals[max(0, y - half):y + half + 1, max(0, x - half):x + half + 1]
            assert w.min() - 1e-12 <= out.values[y, x] <= w.max() + 1e-12


def test_lee_rejects_bad_window():
    g = RasterGrid.from_array(np.ones((4, 4)))
    for w in (2, 4, 1, 0):
        with pytest.raises(RasterError):
            lee_filter(g, window=w)


def test_lee_preserves_dimensions_and_mask():
    rng = np.random.default_rng(0)
    valid = rng.random((9, 13)) > 0.2
    g = RasterGrid.from_array(rng.uniform(0, 2, (9, 13)), valid)
    out = lee_filter(g)
    assert (out.width, out.height) == (g.width, g.height)
    np.testing.assert_array_equal(out.valid, g.valid)


# ---------------------------------------------------------------------------
# tiling
# ---------------------------------------------------------------------------

def test_tile_512_into_4():
    g = RasterGrid.from_array(np.arange(512 * 512, dtype=float).reshape(512, 512))
    tiles = tile_grid(g, 256)
    assert [t.origin for t in tiles] == [(0, 0), (0, 256), (256, 0), (256, 256)]


def test_tile_300_padding():
    g = RasterGrid.from_array(np.ones((300, 300)))
    tiles = tile_grid(g, 256)
    assert len(tiles) == 4
    t = next(t for t in tiles if t.origin == (0, 256))
    assert t.grid.valid[:, :44].all()
    assert not t.grid.valid[:, 44:].any()


def test_tile_identity():
    g = RasterGrid.from_array(np.random.default_rng(1).random((256, 256)))
    tiles = tile_grid(g, 256)
    assert len(tiles) == 1
    np.testing.assert_array_equal(tiles[0].grid.values, g.values)
    assert tiles[0].grid.valid.all()


def test_tile_stitch_roundtrip_bit_exact():
    rng = np.random.default_rng(5)
    vals = rng.random((133, 517))
    valid = rng.random((133, 517)) > 0.1
    g = RasterGrid.from_array(vals, valid)
    back = stitch_tiles(tile_grid(g, 64), g.width, g.height)
    assert (back.values == g.values).all()
    assert (back.valid == g.valid).all()


def test_tile_rejects_small_size():
    g = RasterGrid.from_array(np.ones((64, 64)))
    with pytest.raises(RasterError):
        tile_grid(g, 16)
