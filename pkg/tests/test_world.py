from spcnav.config import BenchmarkConfig, ConfigError
from spcnav.world import *

import json
import jsonschema
import math
import numpy as np
import os
import pyrsistent
import pytest


def test_line_world_geometry(line_world):
    assert line_world.viewpoints == [0, 1, 2, 3]
    assert line_world.neighbors(1) == [0, 2]
    assert line_world.distance(0, 3) == 9.0
    assert line_world.heading(0, 1) == 0.0
    assert math.isclose(abs(line_world.heading(1, 0)), math.pi)
    assert line_world.path_length([0, 1, 1, 2]) == 6.0


def test_shortest_paths(line_world):
    assert line_world.geodesic(0, 3) == 9.0
    assert line_world.geodesic(2, 2) == 0.0
    assert line_world.next_hop(0, 3) == 1
    assert line_world.next_hop(3, 0) == 2
    assert line_world.next_hop(2, 2) == 2
    assert line_world.shortest_path(3, 0) == [3, 2, 1, 0]

    dist, pred = shortest_paths(line_world, 0)
    assert dist[3] == 9.0
    assert pred[3] == 2
    assert 0 not in pred

    with pytest.raises(WorldError):
        line_world.neighbors(17)


def test_check_rejects_disconnected_worlds():
    positions = {0: (0.0, 0.0), 1: (3.0, 0.0), 2: (9.0, 0.0)}
    scenes = {(0, 1): [], (1, 0): []}
    world = GraphWorld("broken", 0, positions, [(0, 1)], scenes)
    with pytest.raises(WorldError):
        world.check()

    # Every direction of an edge needs a scene
    world = GraphWorld("noscene", 0, positions, [(0, 1), (1, 2)], scenes)
    with pytest.raises(WorldError):
        world.check()


def test_wrap_angle():
    assert math.isclose(wrap_angle(3 * math.pi / 2), -math.pi / 2)
    assert math.isclose(wrap_angle(-3 * math.pi / 2), math.pi / 2)
    assert wrap_angle(0.0) == 0.0


def test_label_feature():
    v = label_feature("door", 8)
    assert v.shape == (8,)
    assert math.isclose(np.linalg.norm(v), 1.0)
    assert np.array_equal(v, label_feature("door", 8))
    assert not np.allclose(v, label_feature("table", 8))


def test_observe(line_world):
    obs = observe(line_world, 1, heading=0.0, k_objects=3, n_max=8)
    assert obs.neighbors == [0, 2]
    assert obs.n_images == 2
    assert obs.n_actions == 3
    assert obs.stop_action == 2
    assert obs.images.shape == (2, 8 + HEADING_ENCODING_DIM)
    assert obs.kappa == [[0], [1]]
    assert obs.labels_of(0) == ["door"]
    assert obs.labels_of(1) == ["couch"]
    assert obs.object_mask.shape == (2, 3)
    assert obs.object_mask.sum() == 4

    # The relative heading is encoded after the pooled label feature
    assert obs.images[1, 8] > 0.8
    assert obs.images[0, 8] < -0.8

    assert obs.action_for(2) == 1
    assert obs.action_for(1) == obs.stop_action
    with pytest.raises(WorldError):
        obs.action_for(3)


def test_observe_is_deterministic(line_world):
    a = observe(line_world, 2, heading=0.5)
    b = observe(line_world, 2, heading=0.5)
    assert np.array_equal(a.images, b.images)


def test_observe_elevations(line_world):
    obs = observe(line_world, 1, elevations=3, n_max=8)
    assert obs.n_images == 6
    assert obs.kappa == [[0, 1, 2], [3, 4, 5]]
    assert len(elevation_angles(3)) == 3

    with pytest.raises(WorldError):
        observe(line_world, 1, elevations=3, n_max=4)


def test_step_env(line_world):
    assert step_env(line_world, 1, 0) == (0, False)
    assert step_env(line_world, 1, 1) == (2, False)
    assert step_env(line_world, 1, 2) == (1, True)

    with pytest.raises(WorldError):
        step_env(line_world, 1, 3)


def test_generate_world(tiny_world):
    assert len(tiny_world) == 8
    assert tiny_world.feature_dim == 8
    tiny_world.check()
    for v in tiny_world.viewpoints:
        assert 1 <= len(tiny_world.neighbors(v)) <= 3
        x, y = tiny_world.positions[v]
        assert 0.0 <= x <= 12.0 and 0.0 <= y <= 12.0

    other = generate_world(8, 3, world_id="tiny", side_length=12.0, feature_dim=8, max_degree=3)
    assert other._serialize() == tiny_world._serialize()


def test_world_roundtrip(tmp_path, tiny_world):
    filename = save_world(tiny_world, str(tmp_path / "world"))
    assert filename.endswith(".json")

    loaded = load_world(filename)
    assert loaded._serialize() == tiny_world._serialize()
    assert loaded.geodesic(0, 7) == tiny_world.geodesic(0, 7)


def test_world_schema(tmp_path, line_world):
    data = line_world._serialize()
    del data["edges"]
    filename = tmp_path / "world.json"
    filename.write_text(json.dumps(data))

    with pytest.raises(jsonschema.ValidationError):
        load_world(str(filename))


def test_generate_episode(tiny_world):
    episode = generate_episode(tiny_world, 1, 3, seed=5)
    assert episode.episode_id == "tiny-5"
    assert episode.gold_path[0] == episode.start
    assert episode.gold_path[-1] == episode.goal
    assert 1 <= len(episode.gold_path) - 1 <= 3
    assert list(episode.gold_path) == tiny_world.shortest_path(episode.start, episode.goal)
    assert episode.gold_parse.instruction_id == "tiny-5"

    assert generate_episode(tiny_world, 1, 3, seed=5) == episode

    with pytest.raises(WorldError):
        generate_episode(tiny_world, 50, 60, seed=5)


def test_episode_invariants():
    gold = generate_corpus(1, seed=0)[0]
    with pytest.raises(pyrsistent.InvariantException):
        gold.set(goal=gold.goal + 100)

    with pytest.raises(pyrsistent.InvariantException):
        gold.set(split="test")


def test_episode_roundtrip(tmp_path, tiny_world):
    episodes = [generate_episode(tiny_world, 1, 3, seed=s) for s in range(3)]
    filename = str(tmp_path / "episodes.jsonl")
    save_episodes(episodes, filename)
    assert load_episodes(filename) == episodes


def test_episode_upgrade(tiny_world):
    data = generate_episode(tiny_world, 1, 3, seed=1)._serialize()
    del data["start_heading"]
    data["_minor"] = 0

    episode = Episode._deserialize(data)
    assert episode.start_heading == 0.0


def test_describe_path(tiny_world):
    path = tiny_world.shortest_path(0, 7)
    instruction, gold = describe_path(tiny_world, path, 0.0, np.random.default_rng(0), "x")
    assert instruction
    assert gold.instruction_id == "x"
    assert len(gold.configurations) >= 1


def test_generate_corpus():
    episodes = generate_corpus(12, seed=3, viewpoints=8, per_world=5)
    assert len(episodes) == 12
    assert len({e.world_id for e in episodes}) == 3
    assert len({e.episode_id for e in episodes}) == 12


def test_build_benchmark(tiny_benchmark):
    config = tiny_benchmark.config
    assert len(tiny_benchmark.worlds) == config.train_worlds + config.unseen_worlds

    train = tiny_benchmark.split("train")
    seen = tiny_benchmark.split("val_seen")
    unseen = tiny_benchmark.split("val_unseen")
    assert len(seen) == config.train_worlds * config.val_seen_per_world
    assert len(train) == config.train_worlds * (
        config.episodes_per_world - config.val_seen_per_world
    )
    assert len(unseen) == config.unseen_worlds * config.episodes_per_world

    # Unseen worlds do not provide training episodes
    assert {e.world_id for e in train}.isdisjoint({e.world_id for e in unseen})

    for episode in tiny_benchmark.episodes:
        world = tiny_benchmark.world_of(episode)
        assert config.min_path <= len(episode.gold_path) - 1 <= config.max_path
        assert episode.goal in world.viewpoints

    with pytest.raises(WorldError):
        tiny_benchmark.split("test")


def test_benchmark_roundtrip(tmp_path, tiny_benchmark):
    written = save_benchmark(tiny_benchmark, str(tmp_path))
    assert os.path.join(str(tmp_path), "benchmark.json") in written

    loaded = load_benchmark(str(tmp_path))
    assert loaded.config == tiny_benchmark.config
    assert loaded.episodes == tiny_benchmark.episodes
    assert sorted(loaded.worlds) == sorted(tiny_benchmark.worlds)


def test_benchmark_config_checks():
    with pytest.raises(ConfigError):
        BenchmarkConfig(name="x", min_path=4, max_path=2)
