"""Texture features: co-occurrence statistics and neighborhood area variance."""

from __future__ import annotations

import numpy as np

from ..graph import RegionGraph
from ..raster import RasterGrid
from .physics import _warn

# the four standard co-occurrence offsets (dr, dc)
OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))

HARALICK_NAMES = ("contrast", "correlation", "energy", "entropy", "homogeneity", "dissimilarity")


def quantize(values: np.ndarray, lo: float, hi: float, levels: int) -> np.ndarray:
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.int64)
    q = np.floor((values - lo) / (hi - lo) * levels).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def glcm(quantized: np.ndarray, mask: np.ndarray, offset: tuple[int, int], levels: int) -> np.ndarray:
    """Symmetric normalized co-occurrence matrix over pairs inside the mask."""
    dr, dc = offset
    h, w = mask.shape
    r0, r1 = max(0, -dr), min(h, h - dr)
    c0, c1 = max(0, -dc), min(w, w - dc)
    a_mask = mask[r0:r1, c0:c1]
    b_mask = mask[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
    both = a_mask & b_mask
    a = quantized[r0:r1, c0:c1][both]
    b = quantized[r0 + dr:r1 + dr, c0 + dc:c1 + dc][both]
    m = np.zeros((levels, levels), dtype=np.float64)
    np.add.at(m, (a, b), 1.0)
    np.add.at(m, (b, a), 1.0)
    total = m.sum()
    return m / total if total > 0 else m


def haralick_stats(p: np.ndarray) -> np.ndarray:
    """(contrast, correlation, energy, entropy, homogeneity, dissimilarity)."""
    levels = p.shape[0]
    i = np.arange(levels, dtype=np.float64)
    ii, jj = np.meshgrid(i, i, indexing="ij")
    diff = ii - jj
    contrast = float((p * diff ** 2).sum())
    mu_i = float((p * ii).sum())
    mu_j = float((p * jj).sum())
    var_i = float((p * (ii - mu_i) ** 2).sum())
    var_j = float((p * (jj - mu_j) ** 2).sum())
    if var_i > 0 and var_j > 0:
        corr = float((p * (ii - mu_i) * (jj - mu_j)).sum() / np.sqrt(var_i * var_j))
    else:
        corr = 0.0
    energy = float((p * p).sum())
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    homogeneity = float((p / (1.0 + diff ** 2)).sum())
    dissimilarity = float((p * np.abs(diff)).sum())
    return np.array([contrast, corr, energy, entropy, homogeneity, dissimilarity])


def compute_textural(
    node: int,
    graph: RegionGraph,
    image: RasterGrid,
    levels: int = 8,
    tile_range: tuple[float, float] | None = None,
) -> dict[str, object]:
    """Mean Haralick vector over the 4 offsets plus neighborhood area variance.

    Quantization levels span the tile's valid intensity range.
    """
    pix = graph.node_pixels[node]
    areas = [len(pix)] + [len(graph.node_pixels[n]) for n in graph.neighbors(node)]
    vas = float(np.var(np.array(areas, dtype=np.float64)))

    if len(pix) < 2:
        _warn("H")
        return {"Vas": vas, "H": np.zeros(6)}

    if tile_range is None:
        v = image.values[image.valid]
        tile_range = (float(v.min()), float(v.max()))

    r0, c0 = pix.min(axis=0)
    r1, c1 = pix.max(axis=0)
    crop = image.values[r0:r1 + 1, c0:c1 + 1]
    mask = np.zeros(crop.shape, dtype=bool)
    mask[pix[:, 0] - r0, pix[:, 1] - c0] = True
    q = quantize(crop, tile_range[0], tile_range[1], levels)

    acc = np.zeros(6)
    used = 0
    for off in OFFSETS:
        m = glcm(q, mask, off, levels)
        if m.sum() > 0:
            acc += haralick_stats(m)
            used += 1
    if used == 0:
        _warn("H")
        return {"Vas": vas, "H": np.zeros(6)}
    return {"Vas": vas, "H": acc / used}
