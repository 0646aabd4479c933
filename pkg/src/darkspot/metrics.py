"""Pixel-level evaluation: confusion counts, detection/false-alarm/accuracy
percentages, the missed-oil ratio, and a global-threshold baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .raster import RasterGrid

log = logging.getLogger(__name__)

UNDEFINED = "undefined"
NOT_APPLICABLE = "n/a"


class MetricsError(ValueError):
    pass


@dataclass
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.tn + other.tn,
                         self.fp + other.fp, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(pred: np.ndarray, truth: np.ndarray, valid: np.ndarray | None = None) -> Confusion:
    """Pixel counts over valid pixels only."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise MetricsError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if valid is None:
        valid = np.ones(pred.shape, dtype=bool)
    elif valid.shape != pred.shape:
        raise MetricsError("valid mask shape mismatch")
    p, t = pred[valid], truth[valid]
    return Confusion(
        tp=int(np.sum(p & t)),
        tn=int(np.sum(~p & ~t)),
        fp=int(np.sum(p & ~t)),
        fn=int(np.sum(~p & t)),
    )


@dataclass
class MetricsReport:
    """Percentages, or the explicit markers for zero denominators ("undefined")
    and missing oil annotations ("n/a")."""

    p_d: float | str
    p_f: float | str
    p_acc: float | str
    p_m: float | str
    confusion: Confusion = field(default_factory=Confusion)

    def row(self) -> dict:
        return {"P_d": self.p_d, "P_f": self.p_f, "P_acc": self.p_acc, "P_m": self.p_m}


def _pct(num: int, den: int) -> float | str:
    return 100.0 * num / den if den else UNDEFINED


def compute_metrics(c: Confusion, mo: int | None = None, ao: int | None = None) -> MetricsReport:
    """Detection probability TP/(TP+FN), false alarm FP/(TP+FP), overall
    accuracy, and missed-oil MO/AO when oil annotations exist."""
    if min(c.tp, c.tn, c.fp, c.fn) < 0:
        raise MetricsError("negative confusion counts")
    if mo is None or ao is None:
        p_m: float | str = NOT_APPLICABLE
    else:
        p_m = _pct(mo, ao)
    return MetricsReport(
        p_d=_pct(c.tp, c.tp + c.fn),
        p_f=_pct(c.fp, c.tp + c.fp),
        p_acc=_pct(c.tp + c.tn, c.total),
        p_m=p_m,
        confusion=c,
    )


# ---------------------------------------------------------------------------
# Otsu baseline
# ---------------------------------------------------------------------------

N_BINS = 256


def otsu_threshold_bin(hist: np.ndarray) -> int:
    """Cut index t maximizing between-class variance; classes are bins
    [0..t] and [t+1..]; ties resolve to the lower threshold."""
    total = hist.sum()
    p = hist.astype(np.float64) / total
    idx = np.arange(len(hist), dtype=np.float64)
    w0 = np.cumsum(p)
    mu_cum = np.cumsum(p * idx)
    mu_total = mu_cum[-1]
    best_t, best_var = 0, -1.0
    for t in range(len(hist) - 1):
        w = w0[t]
        if w <= 0 or w >= 1:
            continue
        mu0 = mu_cum[t] / w
        mu1 = (mu_total - mu_cum[t]) / (1.0 - w)
        var = w * (1.0 - w) * (mu0 - mu1) ** 2
        if var > best_var + 1e-15:
            best_var, best_t = var, t
    return best_t


def otsu_baseline(grid: RasterGrid) -> np.ndarray:
    """Global threshold on a 256-bin histogram of the valid pixels; pixels
    below the threshold are marked as dark spot. A single-valued grid yields
    an all-sea mask with a warning."""
    vals = grid.values[grid.valid]
    out = np.zeros(grid.values.shape, dtype=bool)
    if vals.size == 0:
        log.warning("otsu: no valid pixels; returning all-sea mask")
        return out
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        log.warning("otsu: single-valued grid; returning all-sea mask")
        return out
    bins = np.clip(((grid.values - lo) / (hi - lo) * N_BINS).astype(np.int64), 0, N_BINS - 1)
    hist = np.bincount(bins[grid.valid], minlength=N_BINS)
    t = otsu_threshold_bin(hist)
    out[grid.valid] = bins[grid.valid] <= t
    return out
