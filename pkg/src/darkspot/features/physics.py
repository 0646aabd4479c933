"""Intensity and gradient features of a region against its background.

The background of a node is the union of the pixels of all its graph
neighbors; isolated nodes fall back to the whole-tile valid pixels.
Ratio features with a zero denominator fall back to 0 and bump the module
fallback counter.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..graph import RegionGraph
from ..raster import RasterGrid
from .geometry import boundary_pixels, region_mask

fallbacks: dict[str, int] = {}


def _warn(code: str) -> None:
    fallbacks[code] = fallbacks.get(code, 0) + 1


def _ratio(num: float, den: float, code: str) -> float:
    if den == 0:
        _warn(code)
        return 0.0
    return num / den


def sobel_magnitude(values: np.ndarray) -> np.ndarray:
    gy = ndimage.sobel(values, axis=0, mode="reflect")
    gx = ndimage.sobel(values, axis=1, mode="reflect")
    return np.hypot(gy, gx)


def ring_pixels(pixels: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """One-ring band: pixels 4-adjacent to the region but not in it."""
    mask, (r0, c0) = region_mask(pixels)
    cross = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    band = ndimage.binary_dilation(mask, structure=cross) & ~mask
    ys, xs = np.nonzero(band)
    ys = ys + r0 - 1
    xs = xs + c0 - 1
    h, w = shape
    ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    return np.stack([ys[ok], xs[ok]], axis=1)


def compute_physical(
    node: int,
    graph: RegionGraph,
    image: RasterGrid,
    grad: np.ndarray | None = None,
    boundary: np.ndarray | None = None,
) -> dict[str, float]:
    if grad is None:
        grad = sobel_magnitude(image.values)
    pix = graph.node_pixels[node]
    if boundary is None:
        boundary = boundary_pixels(pix)
    vals = image.values[pix[:, 0], pix[:, 1]]

    nbrs = graph.neighbors(node)
    if nbrs:
        bg_pix = np.concatenate([graph.node_pixels[n] for n in nbrs])
        bg = image.values[bg_pix[:, 0], bg_pix[:, 1]]
    else:
        bg = image.values[image.valid]  # whole-tile fallback for isolated nodes

    om = float(vals.mean())
    osd = float(vals.std())
    bm = float(bg.mean())
    bsd = float(bg.std())

    pos = vals > 0
    if pos.any():
        cr = bm / vals[pos]
        crm, crstd = float(cr.mean()), float(cr.std())
    else:
        _warn("Crm")
        crm = crstd = 0.0

    opm = _ratio(osd, om, "Opm")
    bpm = _ratio(bsd, bm, "Bpm")

    g = grad[pix[:, 0], pix[:, 1]]
    gb = grad[boundary[:, 0], boundary[:, 1]]

    ring = ring_pixels(pix, image.values.shape)
    if len(ring):
        rv = image.values[ring[:, 0], ring[:, 1]][image.valid[ring[:, 0], ring[:, 1]]]
    else:
        rv = np.zeros(0)
    spm = _ratio(float(rv.std()), float(rv.mean()), "Spm") if rv.size else 0.0
    if rv.size == 0:
        _warn("Spm")

    return {
        "Om": om,
        "Osd": osd,
        "Bm": bm,
        "Bsd": bsd,
        "Crm": crm,
        "Crstd": crstd,
        "Opm": opm,
        "Bpm": bpm,
        "Opm/Bpm": _ratio(opm, bpm, "Opm/Bpm"),
        "Cmax": bm - float(vals.min()),
        "Cm": bm - om,
        "RISDI": _ratio(osd, om, "RISDI"),
        "RISDO": _ratio(bsd, om, "RISDO"),
        "IOR": _ratio(om, bm, "IOR"),
        "Gm": float(g.mean()),
        "Gsd": float(g.std()),
        "Gmax": float(g.max()),
        "Obg": float(gb.mean()) if gb.size else 0.0,
        "Spm": spm,
        "RIIA": _ratio(bm - om, bm, "RIIA"),
    }
