"""Plain-text pipeline configuration: ``key = value`` lines, # comments.

Unknown keys are rejected, every value is validated against the consuming
stage's preconditions, and error messages name the offending key. The
``workers`` key only affects scheduling, so it is excluded from the
canonical form used for run-identity hashing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # reproducibility / scheduling
    seed: int = 0
    workers: int = 1
    # synthetic scenes
    n_scenes: int = 60
    scene_size: int = 128
    background_mean: float = 1.0
    speckle_looks: float = 4.0
    spots_min: int = 1
    spots_max: int = 3
    contrast_min: float = 0.3
    contrast_max: float = 0.7
    radius_min: float = 8.0
    radius_max: float = 18.0
    ribbon_fraction: float = 0.5
    # preprocessing
    tile_size: int = 256
    lee_window: int = 3
    lee_cu: float = 0.25
    # superpixels
    n_init: int = 3000
    sp_max_iters: int = 250
    sp_spatial_weight: float = 0.2
    # region graph
    node_truth_threshold: float = 0.5
    # features
    glcm_levels: int = 8
    # feature selection
    svm_c: float = 1.0
    svm_epochs: int = 200
    svm_lr: float = 0.5
    rfe_tolerance: float = 0.005
    svm_max_samples: int = 5000
    # classifier
    gcn_layers: int = 28
    gcn_hidden: int = 128
    gcn_dropout: float = 0.2
    aggregator: str = "softmax"
    beta_init: float = 1.0
    s_init: float = 1.0
    y_init: float = 0.0
    p_init: float = 1.0
    # training
    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 100
    # prediction / evaluation
    predict_split: str = "test"

    def validate(self) -> None:
        def require(ok: bool, key: str, why: str):
            if not ok:
                raise ConfigError(f"invalid value for '{key}': {why}")

        require(self.workers >= 1, "workers", "must be >= 1")
        require(self.n_scenes >= 5, "n_scenes", "must be >= 5")
        require(self.scene_size >= 32, "scene_size", "must be >= 32")
        require(self.background_mean > 0, "background_mean", "must be > 0")
        require(self.speckle_looks > 0, "speckle_looks", "must be > 0")
        require(0 <= self.spots_min <= self.spots_max, "spots_min", "need 0 <= spots_min <= spots_max")
        require(0 < self.contrast_min <= self.contrast_max < 1, "contrast_min",
                "need 0 < contrast_min <= contrast_max < 1")
        require(0 < self.radius_min <= self.radius_max, "radius_min",
                "need 0 < radius_min <= radius_max")
        require(0 <= self.ribbon_fraction <= 1, "ribbon_fraction", "must be in [0, 1]")
        require(self.tile_size >= 32, "tile_size", "must be >= 32")
        require(self.lee_window >= 3 and self.lee_window % 2 == 1, "lee_window",
                "must be an odd integer >= 3")
        require(self.lee_cu >= 0, "lee_cu", "must be >= 0")
        require(self.n_init >= 1, "n_init", "must be >= 1")
        require(self.sp_max_iters >= 1, "sp_max_iters", "must be >= 1")
        require(self.sp_spatial_weight > 0, "sp_spatial_weight", "must be > 0")
        require(0 < self.node_truth_threshold <= 1, "node_truth_threshold", "must be in (0, 1]")
        require(self.glcm_levels >= 2, "glcm_levels", "must be >= 2")
        require(self.svm_c > 0, "svm_c", "must be > 0")
        require(self.svm_epochs >= 1, "svm_epochs", "must be >= 1")
        require(self.svm_lr > 0, "svm_lr", "must be > 0")
        require(self.rfe_tolerance >= 0, "rfe_tolerance", "must be >= 0")
        require(self.svm_max_samples >= 10, "svm_max_samples", "must be >= 10")
        require(self.gcn_layers >= 1, "gcn_layers", "must be >= 1")
        require(self.gcn_hidden >= 1, "gcn_hidden", "must be >= 1")
        require(0 <= self.gcn_dropout < 1, "gcn_dropout", "must be in [0, 1)")
        require(self.aggregator in ("softmax", "powermean"), "aggregator",
                "must be 'softmax' or 'powermean'")
        require(self.p_init != 0, "p_init", "must be nonzero")
        require(self.learning_rate > 0, "learning_rate", "must be > 0")
        require(self.batch_size >= 1, "batch_size", "must be >= 1")
        require(self.epochs >= 1, "epochs", "must be >= 1")
        require(self.predict_split in ("train", "val", "test"), "predict_split",
                "must be one of train/val/test")

    def canonical(self) -> str:
        """Sorted key=value form; excludes scheduling-only keys."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if f.name == "workers":
                continue
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


_FIELDS = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(key: str, raw: str):
    typ = _FIELDS[key]
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for '{key}': {raw!r} is not a {typ}") from None


def parse_config(text: str) -> PipelineConfig:
    cfg = PipelineConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        setattr(cfg, key, _parse_value(key, raw))
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())
