"""Intensity raster handling: file IO, speckle filtering, tiling.

Grids are 2-D float64 arrays with a per-pixel validity mask (land and
no-data pixels are invalid). Two on-disk formats are supported:

* ``pgm16`` -- binary PGM (P5) with maxval 65535, big-endian payload.
* ``f32raw`` -- little-endian u32 width, u32 height, then width*height
  little-endian float32 values.

A sidecar mask file (same stem, ``.mask`` suffix, 8-bit PGM with 0 marking
invalid pixels) is picked up automatically by :func:`load_grid`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage


class RasterError(ValueError):
    """Malformed raster file or invalid raster operation."""


@dataclass
class RasterGrid:
    """2-D intensity field with validity mask."""

    width: int
    height: int
    values: np.ndarray  # (height, width) float64, row-major
    valid: np.ndarray   # (height, width) bool

    @classmethod
    def from_array(cls, values, valid=None) -> "RasterGrid":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise RasterError("grid values must be 2-D")
        if valid is None:
            valid = np.ones(values.shape, dtype=bool)
        else:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != values.shape:
                raise RasterError("validity mask shape does not match values")
        h, w = values.shape
        return cls(width=w, height=h, values=values, valid=valid)

    def check(self) -> None:
        """Raise RasterError if the grid violates its invariants."""
        if self.values.shape != (self.height, self.width):
            raise RasterError("values shape inconsistent with width/height")
        if self.valid.shape != (self.height, self.width):
            raise RasterError("valid shape inconsistent with width/height")
        v = self.values[self.valid]
        if v.size and (not np.all(np.isfinite(v)) or np.any(v < 0)):
            raise RasterError("valid pixels must be finite and non-negative")

    def copy(self) -> "RasterGrid":
        return RasterGrid(self.width, self.height, self.values.copy(), self.valid.copy())


@dataclass
class Tile:
    """Fixed-size window of a parent grid; edge tiles are padded with invalid pixels."""

    origin: tuple[int, int]  # (row, col) in parent
    grid: RasterGrid


# ---------------------------------------------------------------------------
# PGM / f32raw IO
# ---------------------------------------------------------------------------

def _read_pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Parse `count` whitespace-separated header tokens, honoring # comments.

    Returns the tokens and the offset of the first payload byte.
    """
    tokens: list[int] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise RasterError("truncated PGM header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tok = data[i:j]
            if len(tokens) == 0:
                if tok != b"P5":
                    raise RasterError(f"not a binary PGM file (magic {tok!r})")
                tokens.append(0)
            else:
                if not tok.isdigit():
                    raise RasterError(f"bad PGM header token {tok!r}")
                tokens.append(int(tok))
            i = j
    # exactly one whitespace byte separates header and payload
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM; returns uint16 (maxval > 255) or uint8 array."""
    data = Path(path).read_bytes()
    (_, w, h, maxval), off = _read_pgm_tokens(data, 4)
    if w <= 0 or h <= 0 or not (0 < maxval < 65536):
        raise RasterError(f"bad PGM dimensions {w}x{h} maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    payload = data[off:]
    if len(payload) != need:
        raise RasterError(f"PGM payload size {len(payload)} != expected {need}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8)


def write_pgm(path, arr: np.ndarray, maxval: int = 65535) -> None:
    arr = np.asarray(arr)
    h, w = arr.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode()
    if maxval > 255:
        payload = arr.astype(">u2").tobytes()
    else:
        payload = arr.astype("u1").tobytes()
    Path(path).write_bytes(header + payload)


def _mask_sidecar(path: Path) -> Path:
    return path.with_suffix(".mask")


def load_grid(path, format: str | None = None) -> RasterGrid:
    """Load a grid from pgm16 or f32raw; format inferred from suffix if omitted.

    All pixels are valid unless a sidecar ``.mask`` PGM exists next to the
    file (0 = invalid).
    """
    path = Path(path)
    if format is None:
        format = "pgm16" if path.suffix.lower() == ".pgm" else "f32raw"
    if format == "pgm16":
        values = read_pgm(path).astype(np.float64)
    elif format == "f32raw":
        data = path.read_bytes()
        if len(data) < 8:
            raise RasterError("truncated f32raw header")
        w, h = struct.unpack("<II", data[:8])
        if w <= 0 or h <= 0:
            raise RasterError(f"bad f32raw dimensions {w}x{h}")
        need = 8 + 4 * w * h
        if len(data) != need:
            raise RasterError(f"f32raw payload size {len(data) - 8} != expected {4 * w * h}")
        flat = np.frombuffer(data[8:], dtype="<f4")
        bad = np.flatnonzero(~np.isfinite(flat))
        if bad.size:
            raise RasterError(f"non-finite value at index {bad[0]}")
        values = flat.astype(np.float64).reshape(h, w)
    else:
        raise RasterError(f"unknown raster format {format!r}")

    valid = None
    sidecar = _mask_sidecar(path)
    if sidecar.exists():
        m = read_pgm(sidecar)
        if m.shape != values.shape:
            raise RasterError("sidecar mask dimensions do not match grid")
        valid = m != 0
    grid = RasterGrid.from_array(values, valid)
    grid.check()
    return grid


def save_grid_f32(grid: RasterGrid, path) -> None:
    """Write f32raw; emits a sidecar mask only when some pixels are invalid."""
    path = Path(path)
    header = struct.pack("<II", grid.width, grid.height)
    path.write_bytes(header + grid.values.astype("<f4").tobytes())
    if not grid.valid.all():
        write_pgm(_mask_sidecar(path), np.where(grid.valid, 255, 0), maxval=255)


def write_mask(mask: np.ndarray, path) -> None:
    """Write a binary mask as 8-bit PGM: 0 = sea, 255 = dark spot."""
    write_pgm(path, np.where(np.asarray(mask) != 0, 255, 0), maxval=255)


def read_mask(path) -> np.ndarray:
    return read_pgm(path) != 0


# ---------------------------------------------------------------------------
# Lee filter
# ---------------------------------------------------------------------------

def _box_sum(arr: np.ndarray, window: int) -> np.ndarray:
    """Sum of `arr` over a window x window box clipped to the array bounds."""
    h, w = arr.shape
    half = window // 2
    c = np.zeros((h + 1, w + 1), dtype=np.float64)
    c[1:, 1:] = arr.cumsum(axis=0).cumsum(axis=1)
    r0 = np.clip(np.arange(h) - half, 0, h)
    r1 = np.clip(np.arange(h) + half + 1, 0, h)
    c0 = np.clip(np.arange(w) - half, 0, w)
    c1 = np.clip(np.arange(w) + half + 1, 0, w)
    return c[np.ix_(r1, c1)] - c[np.ix_(r0, c1)] - c[np.ix_(r1, c0)] + c[np.ix_(r0, c0)]


def lee_filter(grid: RasterGrid, window: int = 3, cu: float = 0.25) -> RasterGrid:
    """Adaptive multiplicative-noise speckle filter.

    Each valid pixel is replaced by ``mean + W * (value - mean)`` where the
    mean/variance are taken over the valid pixels of the window and
    ``W = clip((var - (cu*mean)^2) / var, 0, 1)``; ``cu`` is the noise
    coefficient of variation. Invalid pixels pass through unchanged and do
    not contribute to neighbors' statistics. Windows with fewer than two
    valid pixels leave the center unchanged.
    """
    if window < 3 or window % 2 == 0:
        raise RasterError(f"window must be an odd integer >= 3, got {window}")
    vals = np.where(grid.valid, grid.values, 0.0)
    vmask = grid.valid.astype(np.float64)
    n = _box_sum(vmask, window)
    s1 = _box_sum(vals, window)
    s2 = _box_sum(vals * vals, window)

    out = grid.values.copy()
    active = grid.valid & (n >= 2)

    mean = np.zeros_like(s1)
    np.divide(s1, n, out=mean, where=n > 0)
    var = np.zeros_like(s1)
    np.divide(s2, n, out=var, where=n > 0)
    var -= mean * mean
    np.maximum(var, 0.0, out=var)

    # exact zero-variance detection: cumsum round-off must not break the
    # identity on constant neighborhoods
    inf = np.where(grid.valid, grid.values, np.inf)
    neginf = np.where(grid.valid, grid.values, -np.inf)
    wmin = ndimage.minimum_filter(inf, size=window, mode="constant", cval=np.inf)
    wmax = ndimage.maximum_filter(neginf, size=window, mode="constant", cval=-np.inf)
    flat = wmin == wmax
    var[flat] = 0.0

    weight = np.zeros_like(var)
    pos = var > 0
    weight[pos] = (var[pos] - (cu * mean[pos]) ** 2) / var[pos]
    np.clip(weight, 0.0, 1.0, out=weight)

    smooth = active & ~flat
    out[smooth] = mean[smooth] + weight[smooth] * (grid.values[smooth] - mean[smooth])
    return RasterGrid(grid.width, grid.height, out, grid.valid.copy())


# ---------------------------------------------------------------------------
# Tiling
# ---------------------------------------------------------------------------

def tile_grid(grid: RasterGrid, size: int = 256) -> list[Tile]:
    """Cut the grid into size x size tiles covering it exactly once.

    Edge tiles are zero-padded; padding pixels carry valid=False.
    """
    if size < 32:
        raise RasterError(f"tile size must be >= 32, got {size}")
    tiles = []
    for r in range(0, grid.height, size):
        for c in range(0, grid.width, size):
            vals = np.zeros((size, size), dtype=np.float64)
            valid = np.zeros((size, size), dtype=bool)
            rh = min(size, grid.height - r)
            cw = min(size, grid.width - c)
            vals[:rh, :cw] = grid.values[r:r + rh, c:c + cw]
            valid[:rh, :cw] = grid.valid[r:r + rh, c:c + cw]
            tiles.append(Tile(origin=(r, c), grid=RasterGrid(size, size, vals, valid)))
    return tiles


def stitch_tiles(tiles: list[Tile], width: int, height: int) -> RasterGrid:
    """Inverse of tile_grid: place tiles back and drop the padding."""
    vals = np.zeros((height, width), dtype=np.float64)
    valid = np.zeros((height, width), dtype=bool)
    for t in tiles:
        r, c = t.origin
        rh = min(t.grid.height, height - r)
        cw = min(t.grid.width, width - c)
        vals[r:r + rh, c:c + cw] = t.grid.values[:rh, :cw]
        valid[r:r + rh, c:c + cw] = t.grid.valid[:rh, :cw]
    return RasterGrid(width, height, vals, valid)
