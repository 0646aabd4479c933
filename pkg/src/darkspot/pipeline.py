"""Stage-oriented pipeline over a run directory.

Every stage writes its artifacts under ``run/{scenes,tiles,labels,graphs,
features,model,preds,eval}/`` and records their SHA-256 digests in the
top-level ``manifest.csv``. A stage verifies the recorded digest of every
input it reads, so editing any upstream artifact (or changing the config)
invalidates downstream stages with a clear diagnostic instead of silently
mixing runs. Reruns with the same config and seed are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features as feats
from . import gcn
from .config import PipelineConfig
from .graph import build_graph, label_nodes, load_graph_edges, load_node_labels, rasterize_prediction, save_graph
from .metrics import NOT_APPLICABLE, UNDEFINED, Confusion, compute_metrics, confusion, otsu_baseline
from .raster import RasterGrid, lee_filter, load_grid, read_mask, save_grid_f32, tile_grid, write_mask
from .selection import Ranking, f1_curve, load_ranking, rfe_rank, save_f1_curve, save_ranking
from .superpixel import load_labels, save_labels, segment
from .synth import SceneDistribution, load_dataset, make_dataset

log = logging.getLogger(__name__)

RUN_SUBDIRS = ("scenes", "tiles", "labels", "graphs", "features", "model", "preds", "eval")
MANIFEST = "manifest.csv"
CONFIG_SNAPSHOT = "config.snapshot"


class RunError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# run directory and manifest
# ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    def __init__(self, root, cfg: PipelineConfig):
        self.root = Path(root)
        self.cfg = cfg
        self.root.mkdir(parents=True, exist_ok=True)
        for sub in RUN_SUBDIRS:
            (self.root / sub).mkdir(exist_ok=True)
        self._check_config_snapshot()
        self.manifest = self._load_manifest()

    def _check_config_snapshot(self) -> None:
        snap = self.root / CONFIG_SNAPSHOT
        canonical = self.cfg.canonical()
        if snap.exists():
            if snap.read_text() != canonical:
                raise RunError(
                    f"config hash mismatch: run directory {self.root} was produced with a "
                    f"different configuration; use a fresh --run-dir or restore the config"
                )
        else:
            snap.write_text(canonical)

    def _load_manifest(self) -> dict[str, str]:
        path = self.root / MANIFEST
        if not path.exists():
            return {}
        with open(path, newline="") as f:
            return {r["path"]: r["sha256"] for r in csv.DictReader(f)}

    def _write_manifest(self) -> None:
        with open(self.root / MANIFEST, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["path", "sha256"])
            for rel in sorted(self.manifest):
                wr.writerow([rel, self.manifest[rel]])

    def rel(self, path) -> str:
        return str(Path(path).relative_to(self.root))

    def register(self, paths) -> None:
        for p in paths:
            self.manifest[self.rel(p)] = sha256_file(p)
        self._write_manifest()

    def verify(self, paths) -> None:
        """Require every path to exist, be registered, and match its digest."""
        for p in paths:
            p = Path(p)
            rel = self.rel(p)
            if not p.exists():
                raise RunError(f"missing input {rel}: run the producing stage first")
            recorded = self.manifest.get(rel)
            if recorded is None:
                raise RunError(f"unregistered input {rel}: run the producing stage first")
            if sha256_file(p) != recorded:
                raise RunError(f"hash mismatch on {rel}: artifact changed since it was produced; "
                               f"rerun the producing stage")


@dataclass
class TileRecord:
    tile: str
    truth: str
    scene: str
    split: str
    origin_row: int
    origin_col: int
    has_oil: bool

    @property
    def stem(self) -> str:
        return Path(self.tile).stem


def _write_tiles_csv(path, records: list[TileRecord]) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["tile", "truth", "scene", "split", "origin_row", "origin_col", "has_oil"])
        for r in records:
            wr.writerow([r.tile, r.truth, r.scene, r.split, r.origin_row, r.origin_col, int(r.has_oil)])


def _read_tiles_csv(path) -> list[TileRecord]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [TileRecord(r["tile"], r["truth"], r["scene"], r["split"],
                       int(r["origin_row"]), int(r["origin_col"]), bool(int(r["has_oil"])))
            for r in rows]


def _parallel(fn, jobs, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_synth(cfg: PipelineConfig, run_dir) -> None:
    run = Run(run_dir, cfg)
    out = run.root / "scenes"
    dist = SceneDistribution(
        size=cfg.scene_size, background_mean=cfg.background_mean,
        speckle_looks=cfg.speckle_looks, spots_min=cfg.spots_min, spots_max=cfg.spots_max,
        contrast_min=cfg.contrast_min, contrast_max=cfg.contrast_max,
        radius_min=cfg.radius_min, radius_max=cfg.radius_max,
        ribbon_fraction=cfg.ribbon_fraction,
    )
    records = make_dataset(cfg.n_scenes, out, dist, seed=cfg.seed)
    produced = [out / "dataset.csv"]
    for r in records:
        produced += [Path(r.path), Path(r.mask_path)]
    run.register(produced)
    log.info("synth: %d scenes", len(records))


def stage_preprocess(cfg: PipelineConfig, run_dir) -> None:
    run = Run(run_dir, cfg)
    manifest_path = run.root / "scenes" / "dataset.csv"
    run.verify([manifest_path])
    records = load_dataset(manifest_path)
    run.verify([r.path for r in records] + [r.mask_path for r in records])

    tile_dir = run.root / "tiles"
    produced = []
    tile_records = []
    for rec in records:
        grid = load_grid(rec.path)
        filtered = lee_filter(grid, window=cfg.lee_window, cu=cfg.lee_cu)
        truth = read_mask(rec.mask_path)
        stem = Path(rec.path).stem
        for t in tile_grid(filtered, size=cfg.tile_size):
            r0, c0 = t.origin
            tpath = tile_dir / f"{stem}_r{r0:04d}_c{c0:04d}.f32"
            save_grid_f32(t.grid, tpath)
            produced.append(tpath)
            sidecar = tpath.with_suffix(".mask")
            if sidecar.exists():
                produced.append(sidecar)
            tt = np.zeros((cfg.tile_size, cfg.tile_size), dtype=bool)
            rh = min(cfg.tile_size, truth.shape[0] - r0)
            cw = min(cfg.tile_size, truth.shape[1] - c0)
            tt[:rh, :cw] = truth[r0:r0 + rh, c0:c0 + cw]
            tr_path = tile_dir / f"{stem}_r{r0:04d}_c{c0:04d}.truth.pgm"
            write_mask(tt, tr_path)
            produced.append(tr_path)
            tile_records.append(TileRecord(
                tile=str(tpath), truth=str(tr_path), scene=rec.path, split=rec.split,
                origin_row=r0, origin_col=c0, has_oil=rec.has_oil,
            ))
    _write_tiles_csv(tile_dir / "tiles.csv", tile_records)
    produced.append(tile_dir / "tiles.csv")
    run.register(produced)
    log.info("preprocess: %d tiles", len(tile_records))


def _tile_inputs(run: Run) -> list[TileRecord]:
    tiles_csv = run.root / "tiles" / "tiles.csv"
    run.verify([tiles_csv])
    return _read_tiles_csv(tiles_csv)


def _segment_job(args) -> str:
    tile_path, out_path, n_init, max_iters, seed, weight = args
    grid = load_grid(tile_path)
    lm = segment(grid, n_init=n_init, max_iters=max_iters, seed=seed, spatial_weight=weight)
    save_labels(lm, out_path)
    return out_path


def stage_segment(cfg: PipelineConfig, run_dir) -> None:
    run = Run(run_dir, cfg)
    records = _tile_inputs(run)
    run.verify([r.tile for r in records])
    jobs = [
        (r.tile, str(run.root / "labels" / f"{r.stem}.spx"),
         cfg.n_init, cfg.sp_max_iters, cfg.seed, cfg.sp_spatial_weight)
        for r in records
    ]
    produced = _parallel(_segment_job, jobs, cfg.workers)
    run.register(produced)
    log.info("segment: %d label maps", len(produced))


def _features_job(args) -> tuple[str, str, str]:
    tile_path, labels_path, truth_path, edges_path, nodes_path, feats_path, threshold, levels = args
    grid = load_grid(tile_path)
    lm = load_labels(labels_path)
    graph = build_graph(lm)
    truth = read_mask(truth_path)
    y = label_nodes(graph, truth, threshold=threshold)
    save_graph(graph, y, edges_path, nodes_path)
    matrix = feats.assemble_matrix(graph, grid, glcm_levels=levels)
    feats.save_features(matrix, feats_path)
    return edges_path, nodes_path, feats_path


def stage_features(cfg: PipelineConfig, run_dir) -> None:
    run = Run(run_dir, cfg)
    records = _tile_inputs(run)
    labels = [str(run.root / "labels" / f"{r.stem}.spx") for r in records]
    run.verify([r.tile for r in records] + [r.truth for r in records] + labels)
    jobs = [
        (r.tile, lab,
         r.truth,
         str(run.root / "graphs" / f"{r.stem}.edges"),
         str(run.root / "graphs" / f"{r.stem}.nodes.csv"),
         str(run.root / "features" / f"{r.stem}.csv"),
         cfg.node_truth_threshold, cfg.glcm_levels)
        for r, lab in zip(records, labels)
    ]
    results = _parallel(_features_job, jobs, cfg.workers)
    produced = [p for triple in results for p in triple]
    run.register(produced)
    log.info("features: %d tiles", len(results))


def _load_split_matrices(run: Run, records: list[TileRecord], split: str):
    xs, ys = [], []
    names = None
    for r in records:
        if r.split != split:
            continue
        m = feats.load_features(run.root / "features" / f"{r.stem}.csv")
        y = load_node_labels(run.root / "graphs" / f"{r.stem}.nodes.csv")
        names = m.names
        xs.append(m.values)
        ys.append(y)
    if not xs:
        raise RunError(f"no tiles in split '{split}'")
    return np.vstack(xs), np.concatenate(ys), names


def stage_select(cfg: PipelineConfig, run_dir) -> None:
    run = Run(run_dir, cfg)
    records = _tile_inputs(run)
    needed = []
    for r in records:
        if r.split in ("train", "val"):
            needed += [run.root / "features" / f"{r.stem}.csv",
                       run.root / "graphs" / f"{r.stem}.nodes.csv"]
    run.verify(needed)

    X_train, y_train, names = _load_split_matrices(run, records, "train")
    X_val, y_val, _ = _load_split_matrices(run, records, "val")

    stats = feats.fit_normalizer(feats.FeatureMatrix(values=X_train, names=names))
    Xn_train = feats.apply_normalizer(feats.FeatureMatrix(values=X_train, names=names), stats).values
    Xn_val = feats.apply_normalizer(feats.FeatureMatrix(values=X_val, names=names), stats).values

    if len(Xn_train) > cfg.svm_max_samples:
        rng = np.random.default_rng([cfg.seed, 0x5E1])
        idx = np.sort(rng.choice(len(Xn_train), size=cfg.svm_max_samples, replace=False))
        X_fit, y_fit = Xn_train[idx], y_train[idx]
    else:
        X_fit, y_fit = Xn_train, y_train

    ranking = rfe_rank(X_fit, y_fit, c=cfg.svm_c, epochs=cfg.svm_epochs, lr=cfg.svm_lr)
    curve = f1_curve(ranking, X_fit, y_fit, Xn_val, y_val,
                     c=cfg.svm_c, epochs=cfg.svm_epochs, lr=cfg.svm_lr,
                     tolerance=cfg.rfe_tolerance)

    fdir = run.root / "features"
    feats.save_norm_stats(stats, names, fdir / "norm_stats.csv")
    save_ranking(ranking, fdir / "ranking.csv")
    save_f1_curve(curve, fdir / "f1_curve.csv")
    selected = [names[c] for c in ranking.order[:curve.selected_k]]
    (fdir / "selected.txt").write_text("\n".join(selected) + "\n")
    run.register([fdir / "norm_stats.csv", fdir / "ranking.csv",
                  fdir / "f1_curve.csv", fdir / "selected.txt"])
    log.info("select: %d of %d columns retained", curve.selected_k, len(names))


def _selection_files(run: Run) -> tuple[np.ndarray, list[str], list[str]]:
    fdir = run.root / "features"
    run.verify([fdir / "norm_stats.csv", fdir / "selected.txt"])
    stats, names = feats.load_norm_stats(fdir / "norm_stats.csv")
    selected = [s for s in (fdir / "selected.txt").read_text().splitlines() if s]
    return stats, names, selected


def _load_sample(run: Run, record: TileRecord, stats, names, selected) -> gcn.GraphSample:
    m = feats.load_features(run.root / "features" / f"{record.stem}.csv")
    if m.names != names:
        raise RunError(f"feature columns of {record.stem} do not match the normalizer")
    normed = feats.apply_normalizer(m, stats).values
    cols = [names.index(s) for s in selected]
    X = normed[:, cols]
    y = load_node_labels(run.root / "graphs" / f"{record.stem}.nodes.csv")
    edges = load_graph_edges(run.root / "graphs" / f"{record.stem}.edges")
    if edges:
        e = np.asarray([(u, v) for u, v, _ in edges], dtype=np.int64)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    return gcn.GraphSample(src=src, dst=dst, n_nodes=len(X), features=X, labels=y)


def _sample_inputs(run: Run, records: list[TileRecord]) -> list:
    paths = []
    for r in records:
        paths += [run.root / "features" / f"{r.stem}.csv",
                  run.root / "graphs" / f"{r.stem}.nodes.csv",
                  run.root / "graphs" / f"{r.stem}.edges"]
    return paths


def stage_train(cfg: PipelineConfig, run_dir) -> None:
    run = Run(run_dir, cfg)
    records = _tile_inputs(run)
    train_recs = [r for r in records if r.split == "train"]
    val_recs = [r for r in records if r.split == "val"]
    run.verify(_sample_inputs(run, train_recs + val_recs))
    stats, names, selected = _selection_files(run)

    train_set = [_load_sample(run, r, stats, names, selected) for r in train_recs]
    val_set = [_load_sample(run, r, stats, names, selected) for r in val_recs]

    model = gcn.build_model(
        in_dim=len(selected), hidden=cfg.gcn_hidden, n_layers=cfg.gcn_layers,
        dropout=cfg.gcn_dropout, aggregator=cfg.aggregator,
        beta_init=cfg.beta_init, s_init=cfg.s_init, y_init=cfg.y_init, p_init=cfg.p_init,
        seed=cfg.seed,
    )
    result = gcn.train(model, train_set, val_set,
                       gcn.TrainConfig(learning_rate=cfg.learning_rate,
                                       batch_size=cfg.batch_size,
                                       epochs=cfg.epochs, seed=cfg.seed))

    mdir = run.root / "model"
    gcn.save_checkpoint(model, mdir / "checkpoint.bin", opt_state=result.opt_state,
                        epoch=result.end_epoch)
    gcn.apply_params(model, result.best_params)
    gcn.save_checkpoint(model, mdir / "best.bin", epoch=result.best_epoch)

    def fmt(v):
        return UNDEFINED if v is None else repr(float(v))

    with open(mdir / "history.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["epoch", "train_loss", "val_P_d", "val_P_f", "val_P_acc", "val_F1"])
        for row in result.history:
            wr.writerow([row["epoch"], repr(row["train_loss"]), fmt(row["P_d"]),
                         fmt(row["P_f"]), fmt(row["P_acc"]), fmt(row["F1"])])
    run.register([mdir / "checkpoint.bin", mdir / "best.bin", mdir / "history.csv"])
    log.info("train: best val epoch %d of %d", result.best_epoch, result.end_epoch)


def stage_predict(cfg: PipelineConfig, run_dir) -> None:
    run = Run(run_dir, cfg)
    records = [r for r in _tile_inputs(run) if r.split == cfg.predict_split]
    if not records:
        raise RunError(f"no tiles in split '{cfg.predict_split}'")
    best = run.root / "model" / "best.bin"
    label_paths = [run.root / "labels" / f"{r.stem}.spx" for r in records]
    run.verify([best] + _sample_inputs(run, records) + label_paths)
    stats, names, selected = _selection_files(run)
    model, _, _ = gcn.load_checkpoint(best)

    produced = []
    for r in records:
        sample = _load_sample(run, r, stats, names, selected)
        classes = gcn.predict(model, sample)
        lm = load_labels(run.root / "labels" / f"{r.stem}.spx")
        graph = build_graph(lm)
        mask = rasterize_prediction(graph, classes, lm)
        out = run.root / "preds" / f"{r.stem}.pgm"
        write_mask(mask, out)
        produced.append(out)
    run.register(produced)
    log.info("predict: %d masks (%s split)", len(produced), cfg.predict_split)


def _marker(value) -> str:
    if value in (UNDEFINED, NOT_APPLICABLE):
        return value
    return repr(float(value))


def stage_eval(cfg: PipelineConfig, run_dir) -> str:
    """Writes the metrics CSV and returns the pretty table (also printed)."""
    run = Run(run_dir, cfg)
    records = [r for r in _tile_inputs(run) if r.split == cfg.predict_split]
    preds = [run.root / "preds" / f"{r.stem}.pgm" for r in records]
    run.verify(preds + [r.tile for r in records] + [r.truth for r in records])

    rows = []
    total = {"gcn": Confusion(), "otsu": Confusion()}
    oil = {"gcn": [0, 0], "otsu": [0, 0]}  # [missed, all] oil pixels
    for r, pred_path in zip(records, preds):
        grid = load_grid(r.tile)
        truth = read_mask(r.truth)
        masks = {"gcn": read_mask(pred_path), "otsu": otsu_baseline(grid)}
        for method, mask in masks.items():
            c = confusion(mask, truth, grid.valid)
            total[method] = total[method] + c
            if r.has_oil:
                oil[method][0] += int((truth & ~mask & grid.valid).sum())
                oil[method][1] += int((truth & grid.valid).sum())
            if method == "gcn":
                rep = compute_metrics(c)
                rows.append((r.stem, method, c, rep))

    summary = {}
    for method in ("gcn", "otsu"):
        mo, ao = oil[method]
        rep = compute_metrics(total[method], mo=mo if ao else None, ao=ao if ao else None)
        summary[method] = rep
        rows.append(("ALL", method, total[method], rep))

    edir = run.root / "eval"
    with open(edir / "metrics.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["scope", "method", "tp", "tn", "fp", "fn", "P_d", "P_f", "P_acc", "P_m"])
        for scope, method, c, rep in rows:
            wr.writerow([scope, method, c.tp, c.tn, c.fp, c.fn,
                         _marker(rep.p_d), _marker(rep.p_f), _marker(rep.p_acc), _marker(rep.p_m)])
    run.register([edir / "metrics.csv"])

    def show(v):
        return v if isinstance(v, str) else f"{v:.2f}"

    lines = [f"{'method':<8} {'P_d':>10} {'P_f':>10} {'P_acc':>10} {'P_m':>10}"]
    for method in ("gcn", "otsu"):
        rep = summary[method]
        lines.append(f"{method:<8} {show(rep.p_d):>10} {show(rep.p_f):>10} "
                     f"{show(rep.p_acc):>10} {show(rep.p_m):>10}")
    table = "\n".join(lines)
    print(table)
    return table


STAGES = {
    "synth": stage_synth,
    "preprocess": stage_preprocess,
    "segment": stage_segment,
    "features": stage_features,
    "select": stage_select,
    "train": stage_train,
    "predict": stage_predict,
    "eval": stage_eval,
}
