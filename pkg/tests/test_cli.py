from pathlib import Path

import numpy as np
import pytest

from darkspot.cli import main
from darkspot.config import ConfigError, parse_config

SMALL_CONFIG = """
# small synthetic run for pipeline tests
seed = 0
n_scenes = 8
scene_size = 64
speckle_looks = 4.0
spots_min = 1
spots_max = 2
contrast_min = 0.4
contrast_max = 0.7
radius_min = 6.0
radius_max = 10.0
ribbon_fraction = 0.3
tile_size = 64
n_init = 60
sp_max_iters = 15
svm_epochs = 60
svm_max_samples = 400
gcn_layers = 2
gcn_hidden = 16
gcn_dropout = 0.1
learning_rate = 0.01
batch_size = 4
epochs = 6
"""

ALL_STAGES = ["synth", "preprocess", "segment", "features", "select", "train", "predict", "eval"]


def write_config(tmp_path, text=SMALL_CONFIG) -> Path:
    p = tmp_path / "pipeline.cfg"
    p.write_text(text)
    return p


def run_stage(stage, cfg_path, run_dir, extra=()):
    return main([stage, "--config", str(cfg_path), "--run-dir", str(run_dir), *extra])


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    """One full small pipeline run shared by the read-only tests."""
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = write_config(tmp)
    run_dir = tmp / "run"
    for stage in ALL_STAGES:
        assert run_stage(stage, cfg, run_dir) == 0, f"stage {stage} failed"
    return cfg, run_dir


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_config_defaults_round():
    cfg = parse_config("")
    assert cfg.tile_size == 256
    assert cfg.n_init == 3000
    assert cfg.sp_max_iters == 250
    assert cfg.gcn_layers == 28
    assert cfg.gcn_hidden == 128
    assert cfg.gcn_dropout == 0.2
    assert cfg.learning_rate == 0.001
    assert cfg.batch_size == 16
    assert cfg.lee_cu == 0.25


def test_config_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'foo'"):
        parse_config("foo = 3")


def test_config_negative_learning_rate_names_key():
    with pytest.raises(ConfigError, match="learning_rate"):
        parse_config("learning_rate = -0.1")


def test_config_bad_window():
    with pytest.raises(ConfigError, match="lee_window"):
        parse_config("lee_window = 4")


def test_config_comments_and_whitespace():
    cfg = parse_config("# comment\n\n  seed = 5  # trailing\n")
    assert cfg.seed == 5


def test_cli_validation_exit_code(tmp_path):
    cfg = write_config(tmp_path, "learning_rate = -1\n")
    assert run_stage("synth", cfg, tmp_path / "r") == 2


def test_cli_missing_config_exit_code(tmp_path):
    assert run_stage("synth", tmp_path / "nope.cfg", tmp_path / "r") == 2


# ---------------------------------------------------------------------------
# pipeline behavior
# ---------------------------------------------------------------------------

def test_run_directory_artifacts(completed_run):
    _, run_dir = completed_run
    assert (run_dir / "scenes" / "dataset.csv").exists()
    assert (run_dir / "tiles" / "tiles.csv").exists()
    assert list((run_dir / "labels").glob("*.spx"))
    assert list((run_dir / "graphs").glob("*.edges"))
    assert (run_dir / "features" / "selected.txt").exists()
    assert (run_dir / "model" / "checkpoint.bin").exists()
    assert (run_dir / "model" / "best.bin").exists()
    assert (run_dir / "model" / "history.csv").exists()
    assert list((run_dir / "preds").glob("*.pgm"))
    assert (run_dir / "eval" / "metrics.csv").exists()
    assert (run_dir / "manifest.csv").exists()


def test_eval_rerun_is_byte_identical(completed_run):
    cfg, run_dir = completed_run
    metrics = run_dir / "eval" / "metrics.csv"
    before = metrics.read_bytes()
    assert run_stage("eval", cfg, run_dir) == 0
    assert metrics.read_bytes() == before


def test_stage_with_missing_inputs_fails(tmp_path):
    cfg = write_config(tmp_path)
    assert run_stage("segment", cfg, tmp_path / "empty_run") == 1


def test_editing_artifact_invalidates_downstream(tmp_path):
    cfg = write_config(tmp_path)
    run_dir = tmp_path / "run"
    for stage in ("synth", "preprocess"):
        assert run_stage(stage, cfg, run_dir) == 0
    tile = sorted((run_dir / "tiles").glob("*.f32"))[0]
    data = bytearray(tile.read_bytes())
    data[-1] ^= 0xFF
    tile.write_bytes(bytes(data))
    assert run_stage("segment", cfg, run_dir) == 1


def test_config_change_invalidates_run(tmp_path):
    cfg = write_config(tmp_path)
    run_dir = tmp_path / "run"
    assert run_stage("synth", cfg, run_dir) == 0
    cfg2 = tmp_path / "other.cfg"
    cfg2.write_text(SMALL_CONFIG.replace("epochs = 6", "epochs = 7"))
    assert run_stage("preprocess", cfg2, run_dir) == 1


def test_workers_do_not_change_run_identity(tmp_path):
    cfg = write_config(tmp_path)
    run_dir = tmp_path / "run"
    assert run_stage("synth", cfg, run_dir) == 0
    # different worker count is a scheduling knob, not a new run
    assert run_stage("preprocess", cfg, run_dir, extra=["--workers", "2"]) == 0


def test_history_columns(completed_run):
    _, run_dir = completed_run
    header = (run_dir / "model" / "history.csv").read_text().splitlines()[0]
    assert header == "epoch,train_loss,val_P_d,val_P_f,val_P_acc,val_F1"


def test_metrics_csv_has_model_and_baseline(completed_run):
    _, run_dir = completed_run
    text = (run_dir / "eval" / "metrics.csv").read_text()
    assert "ALL,gcn," in text
    assert "ALL,otsu," in text
