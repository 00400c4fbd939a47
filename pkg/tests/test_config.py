from spcnav.config import *
from spcnav.utils import SpcNavError

import json
import jsonschema
import pyrsistent
import pytest


def test_defaults():
    config = ModelConfig()
    assert config.hidden_dim == 128
    assert config.grounding == "state"
    assert config.use_similarity

    assert TrainConfig().lr == 1e-4
    assert TrainConfig().success_threshold == 3.0


def test_validation():
    with pytest.raises(ConfigError):
        ModelConfig(hidden_dim=0)

    with pytest.raises(ConfigError):
        ModelConfig(grounding="hard")

    with pytest.raises(ConfigError):
        TrainConfig(unknown=1)

    # Landmark and object embeddings share their space
    with pytest.raises(ConfigError):
        ModelConfig(role_dim=8, object_dim=16)


def test_immutability_and_copy():
    config = ModelConfig(hidden_dim=16)
    assert isinstance(config.config, pyrsistent.PMap)
    with pytest.raises(AttributeError):
        config.nonexistent

    other = config.copy(use_motion=False)
    assert other.hidden_dim == 16
    assert not other.use_motion
    assert config.use_motion
    assert other != config
    assert config.copy() == config


def test_enriched_dim():
    config = ModelConfig(hidden_dim=16, role_dim=4, object_dim=4)
    assert config.enriched_dim == 24
    assert config.copy(use_motion=False).enriched_dim == 20
    assert config.copy(use_motion=False, use_landmark=False).enriched_dim == 16


def test_teacher_probability():
    config = TrainConfig(epochs=5, teacher_start=1.0, teacher_end=0.5)
    assert config.teacher_probability(0) == 1.0
    assert config.teacher_probability(4) == 0.5
    assert config.teacher_probability(2) == 0.75
    assert TrainConfig(epochs=1).teacher_probability(0) == 1.0


def test_benchmark_config():
    with pytest.raises(ConfigError):
        BenchmarkConfig(name="x", episodes_per_world=2, val_seen_per_world=2)


def test_registry():
    with pytest.raises(ConfigError):

        class Duplicate(Config, identifier="model"):
            pass


def test_run_config_roundtrip(tmp_path):
    model, train = ModelConfig(hidden_dim=16), TrainConfig(epochs=3)
    filename = save_run_config(str(tmp_path / "config"), model, train)
    assert filename.endswith(".json")

    with open(filename) as f:
        data = json.load(f)
    assert data["_major"] == 0
    assert data["train"]["lr"] == 1e-4

    assert load_run_config(filename) == (model, train)


def test_run_config_precedence(tmp_path):
    filename = save_run_config(
        str(tmp_path / "config.json"), ModelConfig(hidden_dim=16), TrainConfig()
    )
    base = {"model": {"hidden_dim": 32, "token_dim": 8}, "train": {"epochs": 2}}

    model, train = load_run_config(filename, {"image_dim": 4}, {"lr": 0.5}, base=base)
    assert model.hidden_dim == 16
    assert model.image_dim == 4
    assert train.lr == 0.5

    # Materialized file values win over the base layer
    assert model.token_dim == 64
    assert train.epochs == 200

    model, train = load_run_config(base=pyrsistent.freeze(base))
    assert model.hidden_dim == 32
    assert model.token_dim == 8
    assert train.epochs == 2


def test_run_config_upgrade(tmp_path):
    filename = tmp_path / "old.json"
    filename.write_text(json.dumps({"_major": 0, "_minor": 0, "train": {"monitor_weight": 1.5}}))

    _, train = load_run_config(str(filename))
    assert train.progress_weight == 1.5


def test_run_config_errors(tmp_path):
    filename = tmp_path / "bad.json"
    filename.write_text(json.dumps({"_major": 0, "_minor": 1, "extra": {}}))
    with pytest.raises(jsonschema.ValidationError):
        load_run_config(str(filename))

    filename.write_text(json.dumps({"_major": 7, "_minor": 0}))
    with pytest.raises(SpcNavError):
        load_run_config(str(filename))
