"""Per-superpixel feature catalogue, matrix assembly, and normalization.

The catalogue holds 48 named features in three categories; multi-valued
features expand into indexed scalar columns ("Hu[0]" .. "Hu[6]"), so the
flat feature vector has D = sum of the catalogue dimensionalities. All
downstream consumers are dimension-agnostic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..graph import RegionGraph
from ..raster import RasterGrid
from .geometry import boundary_pixels, compute_geometric
from .physics import compute_physical, fallbacks, sobel_magnitude
from .texture import compute_textural

GEOMETRICAL, PHYSICAL, TEXTURAL = "geometrical", "physical", "textural"


@dataclass(frozen=True)
class FeatureSpec:
    code: str
    category: str
    dim: int = 1


CATALOG: tuple[FeatureSpec, ...] = (
    FeatureSpec("A", GEOMETRICAL),
    FeatureSpec("P", GEOMETRICAL),
    FeatureSpec("P/A", GEOMETRICAL),
    FeatureSpec("A/P", GEOMETRICAL),
    FeatureSpec("E", GEOMETRICAL),
    FeatureSpec("Maxx/P", GEOMETRICAL),
    FeatureSpec("Cp1", GEOMETRICAL),
    FeatureSpec("Cp2", GEOMETRICAL),
    FeatureSpec("C", GEOMETRICAL),
    FeatureSpec("S", GEOMETRICAL),
    FeatureSpec("Sw", GEOMETRICAL),
    FeatureSpec("Cu", GEOMETRICAL),
    FeatureSpec("Hu", GEOMETRICAL, 7),
    FeatureSpec("Fs", GEOMETRICAL, 4),
    FeatureSpec("T", GEOMETRICAL),
    FeatureSpec("Shc", GEOMETRICAL),
    FeatureSpec("Ff", GEOMETRICAL),
    FeatureSpec("L/W", GEOMETRICAL),
    FeatureSpec("Si", GEOMETRICAL),
    FeatureSpec("N", GEOMETRICAL),
    FeatureSpec("Rs", GEOMETRICAL),
    FeatureSpec("Mr", GEOMETRICAL),
    FeatureSpec("Sd", GEOMETRICAL),
    FeatureSpec("IABPm", GEOMETRICAL),
    FeatureSpec("Vas", TEXTURAL),
    FeatureSpec("H", TEXTURAL, 6),
    FeatureSpec("Om", PHYSICAL),
    FeatureSpec("Osd", PHYSICAL),
    FeatureSpec("Bm", PHYSICAL),
    FeatureSpec("Bsd", PHYSICAL),
    FeatureSpec("Crm", PHYSICAL),
    FeatureSpec("Crstd", PHYSICAL),
    FeatureSpec("Opm", PHYSICAL),
    FeatureSpec("Bpm", PHYSICAL),
    FeatureSpec("Opm/Bpm", PHYSICAL),
    FeatureSpec("Cmax", PHYSICAL),
    FeatureSpec("Cm", PHYSICAL),
    FeatureSpec("RISDI", PHYSICAL),
    FeatureSpec("RISDO", PHYSICAL),
    FeatureSpec("IOR", PHYSICAL),
    FeatureSpec("Gm", PHYSICAL),
    FeatureSpec("Gsd", PHYSICAL),
    FeatureSpec("Gmax", PHYSICAL),
    FeatureSpec("Obg", PHYSICAL),
    FeatureSpec("Spm", PHYSICAL),
    FeatureSpec("RIIA", PHYSICAL),
    FeatureSpec("EFD", GEOMETRICAL, 10),
    FeatureSpec("IABPsd", GEOMETRICAL),
)


def total_dim() -> int:
    return sum(s.dim for s in CATALOG)


def column_names() -> list[str]:
    names = []
    for s in CATALOG:
        if s.dim == 1:
            names.append(s.code)
        else:
            names.extend(f"{s.code}[{i}]" for i in range(s.dim))
    return names


def column_categories() -> list[str]:
    cats = []
    for s in CATALOG:
        cats.extend([s.category] * s.dim)
    return cats


@dataclass
class FeatureMatrix:
    values: np.ndarray       # (n_nodes, D) float64
    names: list[str]
    stats: np.ndarray | None = None  # (2, D): per-column min, max


def assemble_matrix(graph: RegionGraph, image: RasterGrid, glcm_levels: int = 8) -> FeatureMatrix:
    """Compute the full feature vector for every node of a region graph.

    Columns follow catalogue order, multi-valued features expanded in index
    order; rows follow node ids, so relabeling nodes permutes rows.
    """
    grad = sobel_magnitude(image.values)
    v = image.values[image.valid]
    tile_range = (float(v.min()), float(v.max())) if v.size else (0.0, 1.0)
    names = column_names()
    out = np.zeros((graph.n_nodes, len(names)), dtype=np.float64)
    for node in range(graph.n_nodes):
        pix = graph.node_pixels[node]
        bnd = boundary_pixels(pix)
        vals: dict[str, object] = {}
        vals.update(compute_geometric(pix, boundary=bnd))
        vals.update(compute_physical(node, graph, image, grad=grad, boundary=bnd))
        vals.update(compute_textural(node, graph, image, levels=glcm_levels, tile_range=tile_range))
        col = 0
        for s in CATALOG:
            x = vals[s.code]
            if s.dim == 1:
                out[node, col] = float(x)
            else:
                out[node, col:col + s.dim] = np.asarray(x, dtype=np.float64)
            col += s.dim
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0]
        raise ValueError(f"non-finite feature {names[bad[1]]} at node {bad[0]}")
    return FeatureMatrix(values=out, names=names)


# ---------------------------------------------------------------------------
# min-max normalization
# ---------------------------------------------------------------------------

def fit_normalizer(train: FeatureMatrix) -> np.ndarray:
    """Per-column (min, max) over the training matrix."""
    if train.values.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on an empty matrix")
    return np.stack([train.values.min(axis=0), train.values.max(axis=0)])


def apply_normalizer(matrix: FeatureMatrix, stats: np.ndarray) -> FeatureMatrix:
    """(x - min) / (max - min), constant columns map to 0, result clamped to [0, 1]."""
    lo, hi = stats[0], stats[1]
    span = hi - lo
    out = np.zeros_like(matrix.values)
    np.divide(matrix.values - lo, span, out=out, where=span > 0)
    np.clip(out, 0.0, 1.0, out=out)
    return FeatureMatrix(values=out, names=list(matrix.names), stats=stats.copy())


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def save_features(matrix: FeatureMatrix, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(matrix.names)
        for row in matrix.values:
            wr.writerow([repr(float(x)) for x in row])


def load_features(path) -> FeatureMatrix:
    with open(path, newline="") as f:
        rd = csv.reader(f)
        names = next(rd)
        rows = [[float(x) for x in row] for row in rd]
    return FeatureMatrix(values=np.array(rows, dtype=np.float64).reshape(len(rows), len(names)), names=names)


def save_norm_stats(stats: np.ndarray, names: list[str], path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(names)
        wr.writerow([repr(float(x)) for x in stats[0]])
        wr.writerow([repr(float(x)) for x in stats[1]])


def load_norm_stats(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as f:
        rd = csv.reader(f)
        names = next(rd)
        lo = np.array([float(x) for x in next(rd)])
        hi = np.array([float(x) for x in next(rd)])
    return np.stack([lo, hi]), names


__all__ = [
    "CATALOG",
    "FeatureMatrix",
    "FeatureSpec",
    "apply_normalizer",
    "assemble_matrix",
    "column_categories",
    "column_names",
    "compute_geometric",
    "compute_physical",
    "compute_textural",
    "fallbacks",
    "fit_normalizer",
    "load_features",
    "load_norm_stats",
    "save_features",
    "save_norm_stats",
    "total_dim",
]
