from spcnav.config import BenchmarkConfig, ModelConfig, TrainConfig
from spcnav.paths import locate_benchmark, reset_data_directory
from spcnav.parse import parse_instruction
from spcnav.world import Episode, GraphWorld, SceneObject, build_benchmark, generate_world

import json
import os
import pytest


@pytest.fixture(autouse=True)
def reset_path_variables():
    reset_data_directory()


@pytest.fixture
def data_file():
    """Resolve the name of a file in the test data directory"""

    def _resolve(name):
        return os.path.join(os.path.dirname(__file__), "data", name)

    return _resolve


@pytest.fixture
def line_world():
    """Four viewpoints on a line, three meters apart"""
    positions = {i: (3.0 * i, 0.0) for i in range(4)}
    edges = [(0, 1), (1, 2), (2, 3)]
    labels = {0: "door", 1: "table", 2: "couch", 3: "stairs"}
    scenes = {}
    for a, b in edges:
        scenes[a, b] = [SceneObject(label=labels[b], salience=1.0)]
        scenes[b, a] = [SceneObject(label=labels[a], salience=0.5)]
    return GraphWorld("line", 0, positions, edges, scenes, side_length=12.0, feature_dim=8).check()


@pytest.fixture
def tiny_world():
    return generate_world(8, 3, world_id="tiny", side_length=12.0, feature_dim=8, max_degree=3)


@pytest.fixture
def line_episode():
    """From one end of the line world to the other"""
    instruction = "Walk past the table, and stop at the couch."
    return Episode(
        episode_id="line-0",
        world_id="line",
        instruction=instruction,
        gold_parse=parse_instruction(instruction).to_annotation("line-0"),
        start=0,
        goal=3,
        gold_path=[0, 1, 2, 3],
        split="val_seen",
    )


@pytest.fixture
def small_model_config():
    return ModelConfig(
        token_dim=8,
        hidden_dim=8,
        role_dim=4,
        object_dim=4,
        image_dim=8,
        feature_dim=8,
        n_max=8,
        k_objects=3,
        max_steps=5,
    )


@pytest.fixture
def small_train_config():
    return TrainConfig(lr=1e-3, batch_size=2, epochs=2)


@pytest.fixture
def tiny_benchmark():
    with open(locate_benchmark("tiny"), "r") as f:
        return build_benchmark(BenchmarkConfig(**json.load(f)))


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="Run slow tests"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: mark test as slow to run")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        # --runslow given in cli: do not skip slow tests
        return

    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
