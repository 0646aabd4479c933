"""Synthetic SAR-like scene generator with exact pixel ground truth.

Scenes are a constant-mean background carrying multiplicative gamma speckle,
with darker elliptical spots and curved ribbon strips (ship-discharge-like)
stamped into the mean field. The truth mask marks spot interiors exactly,
independent of the speckle draw.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .raster import RasterGrid, save_grid_f32, write_mask


@dataclass
class Spot:
    shape: str                      # "ellipse" | "ribbon"
    center: tuple[float, float]     # (row, col)
    axes: tuple[float, float]       # ellipse semi-axes, or (length, half-width)
    orientation: float              # radians
    contrast: float                 # fraction of background mean, in (0, 1)
    bend: float = 0.0               # ribbon curvature (quadratic bow, pixels)


@dataclass
class SceneSpec:
    size: int
    background_mean: float = 1.0
    speckle_looks: float = 4.0
    spots: list[Spot] = field(default_factory=list)
    seed: int = 0


def _ellipse_mask(size: int, spot: Spot) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = spot.center
    a, b = spot.axes
    ct, st = np.cos(spot.orientation), np.sin(spot.orientation)
    u = (xx - cx) * ct + (yy - cy) * st
    v = -(xx - cx) * st + (yy - cy) * ct
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _ribbon_mask(size: int, spot: Spot) -> np.ndarray:
    """Curved strip: quadratic bow of given length and half-width."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = spot.center
    length, half_w = spot.axes
    ct, st = np.cos(spot.orientation), np.sin(spot.orientation)
    u = (xx - cx) * ct + (yy - cy) * st          # along the strip
    v = -(xx - cx) * st + (yy - cy) * ct         # across the strip
    half_l = length / 2.0
    along = np.abs(u) <= half_l
    bow = spot.bend * (u / half_l) ** 2 if half_l > 0 else 0.0
    return along & (np.abs(v - bow) <= half_w)


def spot_mask(size: int, spot: Spot) -> np.ndarray:
    if spot.shape == "ellipse":
        return _ellipse_mask(size, spot)
    if spot.shape == "ribbon":
        return _ribbon_mask(size, spot)
    raise ValueError(f"unknown spot shape {spot.shape!r}")


def generate(spec: SceneSpec) -> tuple[RasterGrid, np.ndarray]:
    """Scene intensities and the exact truth mask, deterministic per seed."""
    size = spec.size
    mean_field = np.full((size, size), spec.background_mean, dtype=np.float64)
    truth = np.zeros((size, size), dtype=bool)
    for spot in spec.spots:
        if not 0.0 < spot.contrast < 1.0:
            raise ValueError(f"spot contrast must be in (0, 1), got {spot.contrast}")
        m = spot_mask(size, spot)
        mean_field[m] = spec.background_mean * (1.0 - spot.contrast)
        truth |= m
    rng = np.random.default_rng(spec.seed)
    speckle = rng.gamma(shape=spec.speckle_looks, scale=1.0 / spec.speckle_looks, size=(size, size))
    grid = RasterGrid.from_array(mean_field * speckle)
    return grid, truth


# ---------------------------------------------------------------------------
# dataset manifests
# ---------------------------------------------------------------------------

@dataclass
class SceneDistribution:
    """Sampling ranges for random scenes."""

    size: int = 128
    background_mean: float = 1.0
    speckle_looks: float = 4.0
    spots_min: int = 1
    spots_max: int = 3
    contrast_min: float = 0.3
    contrast_max: float = 0.7
    radius_min: float = 8.0
    radius_max: float = 18.0
    ribbon_fraction: float = 0.5

    def sample_spec(self, seed: int, rng: np.random.Generator) -> SceneSpec:
        n_spots = int(rng.integers(self.spots_min, self.spots_max + 1))
        spots = []
        margin = self.radius_max + 4
        for _ in range(n_spots):
            contrast = float(rng.uniform(self.contrast_min, self.contrast_max))
            cy = float(rng.uniform(margin, self.size - margin))
            cx = float(rng.uniform(margin, self.size - margin))
            angle = float(rng.uniform(0, np.pi))
            if rng.random() < self.ribbon_fraction:
                length = float(rng.uniform(2.5, 4.5)) * self.radius_max
                half_w = float(rng.uniform(2.0, 3.5))
                spots.append(Spot("ribbon", (cy, cx), (length, half_w), angle, contrast,
                                  bend=float(rng.uniform(-6.0, 6.0))))
            else:
                a = float(rng.uniform(self.radius_min, self.radius_max))
                b = float(rng.uniform(self.radius_min * 0.6, a))
                spots.append(Spot("ellipse", (cy, cx), (a, b), angle, contrast))
        return SceneSpec(size=self.size, background_mean=self.background_mean,
                         speckle_looks=self.speckle_looks, spots=spots, seed=seed)


@dataclass
class SceneRecord:
    path: str
    mask_path: str
    split: str
    has_oil: bool


def split_sizes(n: int) -> tuple[int, int, int]:
    """6:2:2 split; sizes round to 60/20/20% and cover n exactly."""
    n_train = round(0.6 * n)
    n_val = round(0.2 * n)
    return n_train, n_val, n - n_train - n_val


def make_dataset(
    n_scenes: int,
    out_dir,
    dist: SceneDistribution,
    seed: int = 0,
) -> list[SceneRecord]:
    """Generate scenes and write an f32raw + truth-mask pair per scene plus
    a manifest CSV with disjoint 6:2:2 split assignments."""
    if n_scenes < 5:
        raise ValueError("need at least 5 scenes for a 6:2:2 split")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 0xD5])
    n_train, n_val, _ = split_sizes(n_scenes)
    order = rng.permutation(n_scenes)
    splits = np.empty(n_scenes, dtype=object)
    splits[order[:n_train]] = "train"
    splits[order[n_train:n_train + n_val]] = "val"
    splits[order[n_train + n_val:]] = "test"

    records = []
    for i in range(n_scenes):
        spec = dist.sample_spec(seed=int(rng.integers(0, 2 ** 31)), rng=rng)
        grid, truth = generate(spec)
        scene_path = out_dir / f"scene_{i:04d}.f32"
        mask_path = out_dir / f"scene_{i:04d}.truth.pgm"
        save_grid_f32(grid, scene_path)
        write_mask(truth, mask_path)
        records.append(SceneRecord(
            path=str(scene_path), mask_path=str(mask_path),
            split=str(splits[i]), has_oil=bool(spec.spots),
        ))
    with open(out_dir / "dataset.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["path", "mask_path", "split", "has_oil"])
        for r in records:
            wr.writerow([r.path, r.mask_path, r.split, int(r.has_oil)])
    return records


def load_dataset(manifest_path) -> list[SceneRecord]:
    with open(manifest_path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [SceneRecord(r["path"], r["mask_path"], r["split"], bool(int(r["has_oil"]))) for r in rows]
