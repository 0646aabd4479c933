"""Region adjacency graphs over superpixel label maps.

Nodes are superpixels; an undirected edge connects two nodes whenever any
of their pixels are 4-adjacent. Per-node pixel lists and boundary lengths
are kept for feature extraction; per-edge shared-boundary lengths count
the 4-adjacent pixel pairs across the edge.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .superpixel import SENTINEL, LabelMap

SEA, DARK_SPOT = 0, 1


class GraphError(ValueError):
    pass


@dataclass
class RegionGraph:
    n_nodes: int
    edges: list[tuple[int, int]]                  # sorted (u, v), u < v
    edge_lengths: dict[tuple[int, int], int]      # shared-boundary pixel pairs
    node_pixels: list[np.ndarray]                 # per node: (area, 2) array of (row, col)
    node_boundary_len: np.ndarray                 # per node boundary pixel count
    shape: tuple[int, int]                        # (height, width) of source map

    def neighbors(self, u: int) -> list[int]:
        return self._adj[u]

    def __post_init__(self):
        adj: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        self._adj = [sorted(a) for a in adj]


def build_graph(labels: LabelMap) -> RegionGraph:
    """Convert a label map into its region adjacency graph."""
    lab = labels.labels
    h, w = lab.shape
    k = labels.n_regions

    ys, xs = np.nonzero(lab >= 0)
    flat = lab[ys, xs]
    order = np.argsort(flat, kind="stable")
    ys, xs, flat = ys[order], xs[order], flat[order]
    counts = np.bincount(flat, minlength=k)
    splits = np.cumsum(counts)[:-1]
    coords = np.stack([ys, xs], axis=1)
    node_pixels = np.split(coords, splits)

    # edges and shared-boundary lengths from adjacent hetero-label pairs
    lengths: dict[tuple[int, int], int] = {}
    for a, b in ((lab[:, :-1], lab[:, 1:]), (lab[:-1, :], lab[1:, :])):
        m = (a != b) & (a >= 0) & (b >= 0)
        pa, pb = a[m], b[m]
        lo = np.minimum(pa, pb)
        hi = np.maximum(pa, pb)
        for u, v in zip(lo.tolist(), hi.tolist()):
            lengths[(u, v)] = lengths.get((u, v), 0) + 1

    # boundary pixel: any 4-neighbor outside the region (other label,
    # sentinel, or outside the image)
    boundary = np.zeros((h, w), dtype=bool)
    boundary[0, :] = boundary[-1, :] = True
    boundary[:, 0] = boundary[:, -1] = True
    boundary[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    boundary[:, 1:] |= lab[:, :-1] != lab[:, 1:]
    boundary[:-1, :] |= lab[:-1, :] != lab[1:, :]
    boundary[1:, :] |= lab[:-1, :] != lab[1:, :]
    bl = np.bincount(lab[boundary & (lab >= 0)], minlength=k)

    return RegionGraph(
        n_nodes=k,
        edges=sorted(lengths),
        edge_lengths=lengths,
        node_pixels=node_pixels,
        node_boundary_len=bl,
        shape=(h, w),
    )


def label_nodes(graph: RegionGraph, truth_mask: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Project a pixel ground-truth mask onto nodes.

    A node is dark_spot iff the marked fraction of its pixels is >= threshold.
    """
    truth = np.asarray(truth_mask)
    if truth.shape != graph.shape:
        raise GraphError(f"truth mask shape {truth.shape} != label map shape {graph.shape}")
    out = np.zeros(graph.n_nodes, dtype=np.int64)
    for i, pix in enumerate(graph.node_pixels):
        frac = truth[pix[:, 0], pix[:, 1]].astype(np.float64).mean()
        out[i] = DARK_SPOT if frac >= threshold else SEA
    return out


def rasterize_prediction(graph: RegionGraph, node_classes: np.ndarray, labels: LabelMap) -> np.ndarray:
    """Paint each pixel with its node's class; sentinel pixels get 0."""
    node_classes = np.asarray(node_classes)
    if node_classes.shape[0] != graph.n_nodes:
        raise GraphError("node class count does not match graph")
    lab = labels.labels
    out = np.zeros(lab.shape, dtype=np.uint8)
    m = lab >= 0
    out[m] = node_classes[lab[m]].astype(np.uint8)
    return out


# ---------------------------------------------------------------------------
# interchange files
# ---------------------------------------------------------------------------

def save_graph(graph: RegionGraph, node_labels: np.ndarray, edges_path, nodes_path) -> None:
    """Edge list as text (u v shared_len), node attributes as CSV."""
    with open(edges_path, "w") as f:
        for u, v in graph.edges:
            f.write(f"{u} {v} {graph.edge_lengths[(u, v)]}\n")
    with open(nodes_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["node_id", "area", "label"])
        for i, pix in enumerate(graph.node_pixels):
            wr.writerow([i, len(pix), int(node_labels[i])])


def load_graph_edges(edges_path) -> list[tuple[int, int, int]]:
    out = []
    for line in Path(edges_path).read_text().splitlines():
        if line.strip():
            u, v, n = line.split()
            out.append((int(u), int(v), int(n)))
    return out


def load_node_labels(nodes_path) -> np.ndarray:
    with open(nodes_path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = np.zeros(len(rows), dtype=np.int64)
    for r in rows:
        out[int(r["node_id"])] = int(r["label"])
    return out
