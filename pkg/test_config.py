"""
Tests for run configuration: presets, JSON overlays, variant routing and the sweep grid.
"""

import json
import logging
import os
import sys

import pytest

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from modules.config import (
    AblationConfig,
    EvalConfig,
    ablation_cells,
    apply_variant,
    is_baseline,
    load_run_config,
    preset_config,
    run_config_from_dict,
)
from modules.errors import ConfigError
from modules.losses import LossConfig
from modules.model import ModelConfig
from modules.settings import THREADS_ENV, worker_threads


def test_presets():
    desk = preset_config("desk")
    assert desk.preset == "desk"
    assert desk.train.max_epochs == 30
    assert desk.generator.n_monitors == 2000

    production = preset_config("production")
    assert production.model.hidden == 256
    assert production.model.out == 128
    assert production.generator.n_monitors == 18291
    assert production.train.max_epochs == 100
    with pytest.raises(ConfigError):
        preset_config("huge")


def test_overlay_keeps_preset_values():
    cfg = run_config_from_dict({"preset": "production", "model": {"layers": 2, "path_lengths": [2, 6]}})
    assert cfg.model.layers == 2
    assert cfg.model.path_lengths == (2, 6)
    assert cfg.model.hidden == 256
    assert cfg.preset == "production"


def test_overlay_errors():
    with pytest.raises(ConfigError):
        run_config_from_dict({"bogus": {}})
    with pytest.raises(ConfigError):
        run_config_from_dict({"model": {"hiden": 32}})
    with pytest.raises(ConfigError):
        run_config_from_dict({"model": {"hidden": 10, "heads": 4}})
    with pytest.raises(ConfigError):
        run_config_from_dict({"train": "fast"})
    with pytest.raises(ConfigError):
        run_config_from_dict(["desk"])


def test_config_dict_round_trip():
    cfg = preset_config("desk")
    assert run_config_from_dict(cfg.to_dict()) == cfg


def test_load_run_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"train": {"lr": 0.01}, "generator": {"n_monitors": 100}}))
    cfg = load_run_config(str(path), seed=9)
    assert cfg.train.lr == 0.01
    assert cfg.generator.n_monitors == 100
    assert cfg.seed == 9
    assert cfg.generator.seed == 9

    assert load_run_config(None).preset == "desk"

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(str(bad))
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.json"))


def test_apply_variant():
    model, loss = ModelConfig(), LossConfig()
    base_model, base_loss = apply_variant(model, loss, "base")
    assert not base_model.use_rwa
    assert base_loss.active() == ("bce",)
    assert not base_loss.balance

    al_model, al_loss = apply_variant(model, loss, "al")
    assert not al_model.use_rwa and al_loss.use_align and not al_loss.use_top1

    rl_model, rl_loss = apply_variant(model, loss, "al_rl")
    assert not rl_model.use_rwa and rl_loss.use_top1 and not rl_loss.balance

    full_model, full_loss = apply_variant(model, loss, "full")
    assert full_model.use_rwa and full_loss.balance
    assert full_loss.active() == ("bce", "top1max", "align")

    with pytest.raises(ConfigError):
        apply_variant(model, loss, "cf")


def test_is_baseline():
    assert is_baseline("cf") and is_baseline("mlp")
    assert not is_baseline("full")
    with pytest.raises(ConfigError):
        is_baseline("gbdt")


def test_ablation_cells():
    cells = ablation_cells(AblationConfig(
        variants=("base", "full", "cf"), path_lengths=(2, 6), lambda_al=(0.1, 0.5), seeds=(0, 1),
    ))
    assert len(cells) == 2 * (1 + 2 * 2 + 1)
    base = [c for c in cells if c["variant"] == "base"]
    assert all(c["lambda_al"] is None and c["path_length"] is None for c in base)
    full = [c for c in cells if c["variant"] == "full" and c["seed"] == 0]
    assert {(c["path_length"], c["lambda_al"]) for c in full} == {(2, 0.1), (2, 0.5), (6, 0.1), (6, 0.5)}
    with pytest.raises(ValueError):
        AblationConfig(variants=("nope",))


def test_eval_config_validation():
    assert EvalConfig(scaling_sizes=[10, 20]).scaling_sizes == (10, 20)
    with pytest.raises(ValueError):
        EvalConfig(candidates="all")
    with pytest.raises(ValueError):
        EvalConfig(pool_size=0)


def test_worker_threads(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert worker_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ConfigError):
        worker_threads()
    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(ConfigError):
        worker_threads()
    monkeypatch.delenv(THREADS_ENV)
    assert worker_threads() >= 1
