"""Superpixel segmentation of intensity tiles.

The segmenter is pluggable by contract: any algorithm producing a valid
:class:`LabelMap` (dense labels, 4-connected regions, deterministic for a
fixed seed) can replace the default. The default is grid-seeded local
k-means over (intensity, x, y) with a spatial weight, followed by
connectivity enforcement, merging of tiny regions, and splitting of
oversized ones.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import RasterGrid

SENTINEL = -1  # label carried by invalid (land / no-data) pixels


class SegmentationError(ValueError):
    pass


@dataclass
class LabelMap:
    width: int
    height: int
    labels: np.ndarray  # (height, width) int32, SENTINEL on invalid pixels
    n_regions: int

    def check(self) -> None:
        lab = self.labels
        if lab.shape != (self.height, self.width):
            raise SegmentationError("label array shape mismatch")
        used = np.unique(lab[lab >= 0])
        if self.n_regions != used.size or (used.size and (used[0] != 0 or used[-1] != self.n_regions - 1)):
            raise SegmentationError("labels are not dense in [0, K)")


def save_labels(labels: LabelMap, path) -> None:
    header = struct.pack("<III", labels.width, labels.height, labels.n_regions)
    Path(path).write_bytes(header + labels.labels.astype("<i4").tobytes())


def load_labels(path) -> LabelMap:
    data = Path(path).read_bytes()
    w, h, k = struct.unpack("<III", data[:12])
    lab = np.frombuffer(data[12:], dtype="<i4").astype(np.int32).reshape(h, w)
    lm = LabelMap(w, h, lab, k)
    lm.check()
    return lm


# ---------------------------------------------------------------------------
# connected components (4-connectivity, same label)
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def find(self, a: int) -> int:
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller root wins so component ids follow row-major order
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def _same_label_components(labels: np.ndarray) -> np.ndarray:
    """Component id (root pixel index) per pixel; SENTINEL pixels get -1."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    uf = _UnionFind(h * w)
    horiz = (labels[:, :-1] == labels[:, 1:]) & (labels[:, :-1] >= 0)
    vert = (labels[:-1, :] == labels[1:, :]) & (labels[:-1, :] >= 0)
    for a, b in zip(idx[:, :-1][horiz], idx[:, 1:][horiz]):
        uf.union(a, b)
    for a, b in zip(idx[:-1, :][vert], idx[1:, :][vert]):
        uf.union(a, b)
    comp = np.array([uf.find(i) for i in range(h * w)], dtype=np.int64).reshape(h, w)
    comp[labels < 0] = -1
    return comp


_NBR_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _neighbor_pairs(labels: np.ndarray):
    """All 4-adjacent (label_a, label_b) pairs with a != b, both non-sentinel."""
    pairs = []
    a, b = labels[:, :-1], labels[:, 1:]
    m = (a != b) & (a >= 0) & (b >= 0)
    pairs.append(np.stack([a[m], b[m]], axis=1))
    a, b = labels[:-1, :], labels[1:, :]
    m = (a != b) & (a >= 0) & (b >= 0)
    pairs.append(np.stack([a[m], b[m]], axis=1))
    return np.concatenate(pairs, axis=0) if pairs else np.zeros((0, 2), dtype=np.int64)


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------

def _seed_positions(n: int, height: int, width: int) -> list[tuple[float, float]]:
    rows = max(1, int(round(np.sqrt(n * height / width)))) if width else 1
    rows = min(rows, n)
    cols = max(1, n // rows)
    while rows * cols > n:
        cols -= 1
    out = []
    for i in range(rows):
        for j in range(cols):
            out.append(((i + 0.5) * height / rows, (j + 0.5) * width / cols))
    return out


def segment(
    tile: RasterGrid,
    n_init: int = 3000,
    max_iters: int = 250,
    seed: int = 0,
    spatial_weight: float = 0.2,
    tiny_fraction: float = 1.0 / 16.0,
    max_area_factor: float = 3.0,
) -> LabelMap:
    """Partition the valid pixels of a tile into superpixels.

    Args:
        tile: intensity grid; invalid pixels are excluded and labeled SENTINEL.
        n_init: requested number of superpixels; clamped to the valid pixel
            count, final count K may be lower after merging.
        max_iters: cap on k-means iterations (stops early on convergence).
        seed: accepted for the segmentation contract; the default algorithm
            is seed-free (grid initialization, no sampling).
        spatial_weight: weight of the normalized spatial distance against the
            normalized intensity distance.

    The result satisfies: dense labels 0..K-1, each region 4-connected,
    K <= n_init, deterministic for fixed inputs.
    """
    del seed  # deterministic without randomness
    if n_init < 1:
        raise SegmentationError("n_init must be >= 1")
    valid = tile.valid
    nv = int(valid.sum())
    if nv == 0:
        raise SegmentationError("tile has no valid pixels")
    n = min(n_init, nv)
    h, w = tile.height, tile.width

    vals = tile.values
    vmin = vals[valid].min()
    vmax = vals[valid].max()
    vrange = vmax - vmin
    inorm = (vals - vmin) / vrange if vrange > 0 else np.zeros_like(vals)

    step = float(np.sqrt(nv / n))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    # seeds: regular grid snapped to the nearest valid pixel
    centers = []
    taken = set()
    for sy, sx in _seed_positions(n, h, w):
        iy, ix = min(h - 1, int(sy)), min(w - 1, int(sx))
        if not valid[iy, ix]:
            r = int(np.ceil(step)) + 1
            y0, y1 = max(0, iy - r), min(h, iy + r + 1)
            x0, x1 = max(0, ix - r), min(w, ix + r + 1)
            sub = valid[y0:y1, x0:x1]
            if not sub.any():
                continue
            cy, cx = np.nonzero(sub)
            d2 = (cy + y0 - iy) ** 2 + (cx + x0 - ix) ** 2
            j = int(np.lexsort((cx, cy, d2))[0])
            iy, ix = int(cy[j] + y0), int(cx[j] + x0)
        if (iy, ix) in taken:
            continue
        taken.add((iy, ix))
        centers.append((inorm[iy, ix], float(iy), float(ix)))
    if not centers:
        fy, fx = np.argwhere(valid)[0]
        centers.append((inorm[fy, fx], float(fy), float(fx)))

    ci = np.array([c[0] for c in centers])
    cy = np.array([c[1] for c in centers])
    cx = np.array([c[2] for c in centers])
    k = len(centers)

    w2 = spatial_weight * spatial_weight
    reach = int(np.ceil(1.5 * step)) + 1
    labels = np.full((h, w), SENTINEL, dtype=np.int32)
    for _ in range(max_iters):
        best = np.full((h, w), np.inf)
        assign = np.full((h, w), SENTINEL, dtype=np.int32)
        for j in range(k):
            y0, y1 = max(0, int(cy[j]) - reach), min(h, int(cy[j]) + reach + 1)
            x0, x1 = max(0, int(cx[j]) - reach), min(w, int(cx[j]) + reach + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            di = inorm[y0:y1, x0:x1] - ci[j]
            dy = (yy[y0:y1, x0:x1] - cy[j]) / step
            dx = (xx[y0:y1, x0:x1] - cx[j]) / step
            d2 = di * di + w2 * (dy * dy + dx * dx)
            win = valid[y0:y1, x0:x1] & (d2 < best[y0:y1, x0:x1])
            best[y0:y1, x0:x1][win] = d2[win]
            assign[y0:y1, x0:x1][win] = j

        missed = valid & (assign < 0)
        if missed.any():
            my, mx = np.nonzero(missed)
            di = inorm[my, mx][:, None] - ci[None, :]
            dy = (my[:, None] - cy[None, :]) / step
            dx = (mx[:, None] - cx[None, :]) / step
            assign[my, mx] = np.argmin(di * di + w2 * (dy * dy + dx * dx), axis=1)

        if np.array_equal(assign, labels):
            break
        labels = assign

        flat = labels[valid]
        cnt = np.bincount(flat, minlength=k).astype(np.float64)
        si = np.bincount(flat, weights=inorm[valid], minlength=k)
        sy_ = np.bincount(flat, weights=yy[valid], minlength=k)
        sx_ = np.bincount(flat, weights=xx[valid], minlength=k)
        nonempty = cnt > 0
        ci[nonempty] = si[nonempty] / cnt[nonempty]
        cy[nonempty] = sy_[nonempty] / cnt[nonempty]
        cx[nonempty] = sx_[nonempty] / cnt[nonempty]

    labels = _enforce_connectivity(labels, inorm)
    labels, k = _relabel_dense(labels)
    labels, k = _merge_tiny(labels, k, inorm, nv, tiny_fraction)
    labels, k = _split_oversized(labels, k, nv, max_area_factor, n_init)
    while k > n_init:  # splitting or orphan islands may overshoot the budget
        labels, k2 = _merge_smallest(labels, k, inorm)
        if k2 == k:
            break
        k = k2
    lm = LabelMap(w, h, labels, k)
    lm.check()
    return lm


def _region_stats(labels: np.ndarray, inorm: np.ndarray, k: int):
    m = labels >= 0
    flat = labels[m]
    area = np.bincount(flat, minlength=k).astype(np.int64)
    mean = np.zeros(k)
    s = np.bincount(flat, weights=inorm[m], minlength=k)
    np.divide(s, area, out=mean, where=area > 0)
    return area, mean


def _enforce_connectivity(labels: np.ndarray, inorm: np.ndarray) -> np.ndarray:
    """Keep each label's largest component; attach orphans to the most
    intensity-similar adjacent settled region."""
    h, w = labels.shape
    comp = _same_label_components(labels)
    out = labels.copy()

    comp_ids, first_idx, sizes = np.unique(comp, return_index=True, return_counts=True)
    live = comp_ids >= 0
    comp_ids, first_idx, sizes = comp_ids[live], first_idx[live], sizes[live]

    # main component per label: largest, ties -> earliest first pixel
    main: dict[int, int] = {}
    order = np.lexsort((first_idx, -sizes))
    for o in order:
        lab = int(labels.flat[first_idx[o]])
        if lab not in main:
            main[lab] = int(comp_ids[o])

    settled = np.isin(comp, list(main.values())) & (labels >= 0)
    orphans = [int(c) for c in comp_ids if int(c) not in main.values()]
    orphans.sort()

    pix = {int(c): np.nonzero(comp == c) for c in orphans}
    queue = list(orphans)
    while queue:
        progressed = False
        retry = []
        for c in queue:
            ys, xs = pix[c]
            cand: dict[int, None] = {}
            for dy, dx in _NBR_OFFSETS:
                ny, nx = ys + dy, xs + dx
                ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
                ny, nx = ny[ok], nx[ok]
                good = settled[ny, nx]
                for lab in np.unique(out[ny[good], nx[good]]):
                    cand[int(lab)] = None
            if not cand:
                retry.append(c)
                continue
            omean = inorm[ys, xs].mean()
            best_lab, best_d = None, None
            for lab in sorted(cand):
                lm = inorm[out == lab].mean()
                d = abs(lm - omean)
                if best_d is None or d < best_d - 1e-15:
                    best_lab, best_d = lab, d
            out[ys, xs] = best_lab
            settled[ys, xs] = True
            progressed = True
        queue = retry
        if not progressed:
            break
    # leftovers (orphan islands) stay as they are; each is internally connected
    return out


def _relabel_dense(labels: np.ndarray):
    """Assign dense ids ordered by each region's first row-major pixel.

    Disconnected leftovers sharing a label are given distinct ids.
    """
    comp = _same_label_components(labels)
    flat = comp.ravel()
    m = flat >= 0
    uniq, inv = np.unique(flat[m], return_inverse=True)
    out = np.full(labels.shape, SENTINEL, dtype=np.int32)
    out.ravel()[m] = inv
    return out, len(uniq)


def _merge_tiny(labels: np.ndarray, k: int, inorm: np.ndarray, nv: int, tiny_fraction: float):
    """Merge regions below tiny_fraction of the mean area into the most
    intensity-similar 4-adjacent region."""
    if k <= 1:
        return labels, k
    thr = (nv / k) * tiny_fraction
    for _ in range(64):
        area, mean = _region_stats(labels, inorm, k)
        tiny = np.nonzero(area < thr)[0]
        if tiny.size == 0:
            break
        pairs = _neighbor_pairs(labels)
        nbrs: dict[int, set[int]] = {}
        for a, b in pairs:
            nbrs.setdefault(int(a), set()).add(int(b))
            nbrs.setdefault(int(b), set()).add(int(a))
        target = np.arange(k, dtype=np.int64)

        def resolve(x: int) -> int:
            while target[x] != x:
                x = int(target[x])
            return x

        merged_any = False
        for lab in sorted(tiny, key=lambda t: (area[t], t)):
            cands = sorted({resolve(c) for c in nbrs.get(int(lab), set())} - {int(lab)})
            if not cands:
                continue
            diffs = [abs(mean[c] - mean[lab]) for c in cands]
            target[lab] = cands[int(np.argmin(diffs))]
            merged_any = True
        if not merged_any:
            break
        final = np.array([resolve(i) for i in range(k)], dtype=np.int64)
        m = labels >= 0
        labels = labels.copy()
        labels[m] = final[labels[m]].astype(np.int32)
        labels, k = _relabel_dense(labels)
        if k <= 1:
            break
    return labels, k


def _merge_smallest(labels: np.ndarray, k: int, inorm: np.ndarray):
    """Merge the smallest region into its most similar neighbor, if any."""
    area, mean = _region_stats(labels, inorm, k)
    pairs = _neighbor_pairs(labels)
    for lab in np.lexsort((np.arange(k), area)):
        cand = np.unique(np.concatenate([pairs[pairs[:, 0] == lab, 1], pairs[pairs[:, 1] == lab, 0]]))
        if cand.size == 0:
            continue
        tgt = cand[int(np.argmin(np.abs(mean[cand] - mean[lab])))]
        out = labels.copy()
        out[out == lab] = tgt
        return _relabel_dense(out)
    return labels, k


def _split_oversized(labels: np.ndarray, k: int, nv: int, factor: float, n_init: int):
    """Split regions larger than factor * mean area along their principal
    axis; every connected piece becomes its own region. Capped at n_init."""
    for _ in range(64):
        if k >= n_init:
            break
        area, _ = _region_stats(labels, np.zeros_like(labels, dtype=np.float64), k)
        mean_area = nv / k
        big = np.nonzero(area > factor * mean_area)[0]
        if big.size == 0:
            break
        labels = labels.copy()
        next_id = k
        budget = n_init - k
        for lab in big:
            if budget <= 0:
                break
            budget -= 1
            ys, xs = np.nonzero(labels == lab)
            pts = np.stack([ys, xs], axis=1).astype(np.float64)
            c = pts - pts.mean(axis=0)
            cov = c.T @ c
            evals, evecs = np.linalg.eigh(cov)
            axis = evecs[:, int(np.argmax(evals))]
            proj = c @ axis
            order = np.lexsort((xs, ys, proj))
            half = len(order) // 2
            second = order[half:]
            labels[ys[second], xs[second]] = next_id
            next_id += 1
        labels, k = _relabel_dense(labels)
    return labels, k


# ---------------------------------------------------------------------------
# boundary overlay
# ---------------------------------------------------------------------------

def boundary_map(labels: LabelMap) -> np.ndarray:
    """Mark pixels having any 4-neighbor with a different label."""
    lab = labels.labels
    out = np.zeros(lab.shape, dtype=bool)
    out[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    out[:, 1:] |= lab[:, :-1] != lab[:, 1:]
    out[:-1, :] |= lab[:-1, :] != lab[1:, :]
    out[1:, :] |= lab[:-1, :] != lab[1:, :]
    return out
