"""Shape features of a superpixel region (binary mask geometry only)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# crack-contour directions: right, down, left, up (y grows downward)
_DIRS = ((0, 1), (1, 0), (0, -1), (-1, 0))
_LEFT = {0: 3, 3: 2, 2: 1, 1: 0}
_RIGHT = {0: 1, 1: 2, 2: 3, 3: 0}


def region_mask(pixels: np.ndarray, pad: int = 1):
    """Local binary mask of a region with `pad` background pixels around it.

    Returns (mask, (row_offset, col_offset)) so that global row = local row
    + row_offset - pad.
    """
    r0, c0 = pixels.min(axis=0)
    r1, c1 = pixels.max(axis=0)
    mask = np.zeros((r1 - r0 + 1 + 2 * pad, c1 - c0 + 1 + 2 * pad), dtype=bool)
    mask[pixels[:, 0] - r0 + pad, pixels[:, 1] - c0 + pad] = True
    return mask, (int(r0), int(c0))


def boundary_pixels(pixels: np.ndarray) -> np.ndarray:
    """Region pixels with a 4-neighbor outside the region.

    Out-of-image neighbors count as outside (the padded local mask treats
    everything beyond the region's bounding box as background).
    """
    mask, (r0, c0) = region_mask(pixels)
    inner = ndimage.binary_erosion(mask, structure=_CROSS)
    ys, xs = np.nonzero(mask & ~inner)
    return np.stack([ys + r0 - 1, xs + c0 - 1], axis=1).astype(np.int64)


def trace_contour(mask: np.ndarray) -> np.ndarray:
    """Closed crack contour of the outer boundary, clockwise, unit steps.

    Vertices are pixel-corner coordinates; the mask must contain one
    4-connected region with a background margin.
    """
    ys, xs = np.nonzero(mask)
    start = (int(ys.min()), int(xs[ys == ys.min()].min()))
    pos = start
    d = 0  # heading right along the top edge, region on the right
    pts = [pos]
    limit = 4 * len(ys) + 8
    for _ in range(limit):
        y, x = pos
        if d == 0:
            left, right = (y - 1, x), (y, x)
        elif d == 1:
            left, right = (y, x), (y, x - 1)
        elif d == 2:
            left, right = (y, x - 1), (y - 1, x - 1)
        else:
            left, right = (y - 1, x - 1), (y - 1, x)
        if mask[left]:
            d = _LEFT[d]
        elif not mask[right]:
            d = _RIGHT[d]
        dy, dx = _DIRS[d]
        pos = (y + dy, x + dx)
        if pos == start and d == 0:
            break
        pts.append(pos)
    return np.array(pts, dtype=np.float64)


def central_moments(pixels: np.ndarray, order: int = 3) -> dict[tuple[int, int], float]:
    y = pixels[:, 0].astype(np.float64)
    x = pixels[:, 1].astype(np.float64)
    x = x - x.mean()
    y = y - y.mean()
    mu = {}
    for p in range(order + 1):
        for q in range(order + 1 - p):
            mu[(p, q)] = float(np.sum(x ** p * y ** q))
    return mu


def hu_moments(pixels: np.ndarray) -> np.ndarray:
    """The 7 classical rotation-invariant moment combinations."""
    mu = central_moments(pixels)
    m00 = mu[(0, 0)]
    eta = {}
    for (p, q), v in mu.items():
        if p + q >= 2:
            eta[(p, q)] = v / m00 ** (1 + (p + q) / 2.0)
    n20, n02, n11 = eta[(2, 0)], eta[(0, 2)], eta[(1, 1)]
    n30, n03, n21, n12 = eta[(3, 0)], eta[(0, 3)], eta[(2, 1)], eta[(1, 2)]
    h = np.zeros(7)
    h[0] = n20 + n02
    h[1] = (n20 - n02) ** 2 + 4 * n11 ** 2
    h[2] = (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2
    h[3] = (n30 + n12) ** 2 + (n21 + n03) ** 2
    h[4] = (n30 - 3 * n12) * (n30 + n12) * ((n30 + n12) ** 2 - 3 * (n21 + n03) ** 2) \
        + (3 * n21 - n03) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2)
    h[5] = (n20 - n02) * ((n30 + n12) ** 2 - (n21 + n03) ** 2) \
        + 4 * n11 * (n30 + n12) * (n21 + n03)
    h[6] = (3 * n21 - n03) * (n30 + n12) * ((n30 + n12) ** 2 - 3 * (n21 + n03) ** 2) \
        - (n30 - 3 * n12) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2)
    return h


def affine_invariants(pixels: np.ndarray) -> np.ndarray:
    """The 4 affine moment invariants (Flusser-Suk)."""
    mu = central_moments(pixels)
    m = mu[(0, 0)]
    u20, u02, u11 = mu[(2, 0)], mu[(0, 2)], mu[(1, 1)]
    u30, u03, u21, u12 = mu[(3, 0)], mu[(0, 3)], mu[(2, 1)], mu[(1, 2)]
    i1 = (u20 * u02 - u11 ** 2) / m ** 4
    i2 = (u30 ** 2 * u03 ** 2 - 6 * u30 * u21 * u12 * u03 + 4 * u30 * u12 ** 3
          + 4 * u03 * u21 ** 3 - 3 * u21 ** 2 * u12 ** 2) / m ** 10
    i3 = (u20 * (u21 * u03 - u12 ** 2) - u11 * (u30 * u03 - u21 * u12)
          + u02 * (u30 * u12 - u21 ** 2)) / m ** 7
    i4 = (u20 ** 3 * u03 ** 2 - 6 * u20 ** 2 * u11 * u12 * u03
          - 6 * u20 ** 2 * u02 * u21 * u03 + 9 * u20 ** 2 * u02 * u12 ** 2
          + 12 * u20 * u11 ** 2 * u21 * u03 + 6 * u20 * u11 * u02 * u30 * u03
          - 18 * u20 * u11 * u02 * u21 * u12 - 8 * u11 ** 3 * u30 * u03
          - 6 * u20 * u02 ** 2 * u30 * u12 + 9 * u20 * u02 ** 2 * u21 ** 2
          + 12 * u11 ** 2 * u02 * u30 * u12 - 6 * u11 * u02 ** 2 * u30 * u21
          + u02 ** 3 * u30 ** 2) / m ** 11
    return np.array([i1, i2, i3, i4])


def elliptic_fourier(contour: np.ndarray, harmonics: int = 5) -> np.ndarray:
    """Normalized elliptic Fourier amplitudes of a closed contour.

    Returns 2 amplitudes per harmonic (x- and y-projections), scaled by the
    magnitude of the first harmonic for size invariance.
    """
    if len(contour) < 3:
        return np.zeros(2 * harmonics)
    pts = np.vstack([contour, contour[:1]])
    d = np.diff(pts, axis=0)
    dt = np.hypot(d[:, 0], d[:, 1])
    keep = dt > 0
    d, dt = d[keep], dt[keep]
    if len(dt) == 0:
        return np.zeros(2 * harmonics)
    t = np.concatenate([[0.0], np.cumsum(dt)])
    T = t[-1]
    dy, dx = d[:, 0], d[:, 1]
    out = np.zeros(2 * harmonics)
    coeffs = []
    for n in range(1, harmonics + 1):
        w = 2 * np.pi * n / T
        cos_d = np.cos(w * t[1:]) - np.cos(w * t[:-1])
        sin_d = np.sin(w * t[1:]) - np.sin(w * t[:-1])
        f = T / (2 * np.pi ** 2 * n ** 2)
        a = f * np.sum(dx / dt * cos_d)
        b = f * np.sum(dx / dt * sin_d)
        c = f * np.sum(dy / dt * cos_d)
        e = f * np.sum(dy / dt * sin_d)
        coeffs.append((a, b, c, e))
    a1, b1, c1, e1 = coeffs[0]
    scale = np.sqrt(a1 * a1 + b1 * b1 + c1 * c1 + e1 * e1)
    if scale == 0:
        return out
    for i, (a, b, c, e) in enumerate(coeffs):
        out[2 * i] = np.hypot(a, b) / scale
        out[2 * i + 1] = np.hypot(c, e) / scale
    return out


def _hull_geometry(pixels: np.ndarray):
    """Convex hull pixel area and interior angles; degenerate hulls fall back
    to (region area, mean pi, std 0)."""
    n = len(pixels)
    if n < 3:
        return float(n), np.pi, 0.0
    pts = pixels.astype(np.float64)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return float(n), np.pi, 0.0
    # pixels whose centers lie inside the hull (<= tolerance on every facet)
    r0, c0 = pixels.min(axis=0)
    r1, c1 = pixels.max(axis=0)
    yy, xx = np.mgrid[r0:r1 + 1, c0:c1 + 1]
    pc = np.stack([yy.ravel(), xx.ravel()], axis=1).astype(np.float64)
    inside = np.ones(len(pc), dtype=bool)
    for eq in hull.equations:
        inside &= pc @ eq[:2] + eq[2] <= 1e-9
    hull_area = float(inside.sum())

    verts = pts[hull.vertices]  # counterclockwise
    m = len(verts)
    angles = []
    for i in range(m):
        a, b, c = verts[(i - 1) % m], verts[i], verts[(i + 1) % m]
        v1, v2 = a - b, c - b
        cosang = np.dot(v1, v2) / (np.linalg.norm(v1) * np.linalg.norm(v2))
        angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
    ang = np.array(angles)
    return hull_area, float(ang.mean()), float(ang.std())


def compute_geometric(pixels: np.ndarray, boundary: np.ndarray | None = None) -> dict[str, object]:
    """All geometric features of one region.

    Multi-valued entries (Hu, Fs, EFD) are arrays; the rest are floats.
    """
    area = float(len(pixels))
    if boundary is None:
        boundary = boundary_pixels(pixels)
    perim = float(len(boundary))

    # second-moment ellipse with the 1/12 unit-square correction so a single
    # pixel has a defined, circular ellipse
    pts = pixels.astype(np.float64)
    c = pts - pts.mean(axis=0)
    cov = c.T @ c / area + np.eye(2) / 12.0
    evals, evecs = np.linalg.eigh(cov)
    minor_ax = 4.0 * np.sqrt(evals[0])
    major_ax = 4.0 * np.sqrt(evals[1])

    proj = c @ evecs
    ext = proj.max(axis=0) - proj.min(axis=0) + 1.0
    lw = float(ext.max() / ext.min())

    mask, _ = region_mask(pixels)
    contour = trace_contour(mask)
    # mean absolute turning angle per unit of contour length
    seg = np.diff(np.vstack([contour, contour[:1], contour[1:2]]), axis=0)
    ang = np.arctan2(seg[:, 0], seg[:, 1])
    turn = np.abs(np.angle(np.exp(1j * np.diff(ang))))
    curvature = float(turn.sum() / len(contour)) if len(contour) > 1 else 0.0

    edt = ndimage.distance_transform_edt(mask)
    thickness = 2.0 * float(edt.max())

    eroded = float(ndimage.binary_erosion(mask, structure=_CROSS).sum())
    closing_mask, _ = region_mask(pixels, pad=2)
    closed = float(ndimage.binary_closing(closing_mask, structure=_CROSS).sum())

    r0, c0 = pixels.min(axis=0)
    r1, c1 = pixels.max(axis=0)
    bbox_area = float((r1 - r0 + 1) * (c1 - c0 + 1))

    hull_area, iabp_mean, iabp_std = _hull_geometry(pixels)

    return {
        "A": area,
        "P": perim,
        "P/A": perim / area,
        "A/P": area / perim,
        "E": major_ax / minor_ax,
        "Maxx/P": major_ax / perim,
        "Cp1": perim / (2.0 * np.sqrt(np.pi * area)),
        "Cp2": perim * perim / area,
        "C": 4.0 * np.pi * area / (perim * perim),
        "S": minor_ax / major_ax,
        "Sw": 2.0 * area / perim,
        "Cu": curvature,
        "Hu": hu_moments(pixels),
        "Fs": affine_invariants(pixels),
        "T": thickness,
        "Shc": area / (eroded + 1.0),
        "Ff": perim * perim / (4.0 * np.pi * area),
        "L/W": lw,
        "Si": perim / (4.0 * np.sqrt(area)),
        "N": area / (major_ax * major_ax),
        "Rs": area / bbox_area,
        "Mr": area / closed if closed > 0 else 1.0,
        "Sd": area / max(hull_area, area),
        "IABPm": iabp_mean,
        "IABPsd": iabp_std,
        "EFD": elliptic_fourier(contour),
    }
