"""Procedurally generated navigation worlds and instruction episodes

A world is a connected graph of viewpoints in a square of metric
coordinates. Looking from a viewpoint towards one of its neighbors, the
agent sees a scene of labelled objects. Episodes pair a start and goal
viewpoint with a templated instruction that describes the shortest path
between them, together with the gold configuration annotation of that
instruction.
"""

from spcnav.parse import GoldAnnotation, SpatialConfiguration, Span, tokenize
from spcnav.paths import check_file_extension, load_schema, locate_file
from spcnav.utils import SpcNavError, dump_jsonl, load_jsonl, stable_seed
from spcnav.versioning import stamp, upgrade_document

import json
import jsonschema
import logging
import math
import networkx as nx
import numpy as np
import os
import pyrsistent
import pytools

logger = logging.getLogger("spcnav")


class WorldError(SpcNavError):
    pass


# The closed vocabulary of object labels placed into scenes
OBJECT_LABELS = (
    "table", "chair", "couch", "sofa", "door", "stairs", "bed", "sink", "lamp",
    "plant", "window", "rug", "desk", "shelf", "counter", "fridge", "oven",
    "piano", "mirror", "painting", "bathtub", "toilet", "cabinet", "fireplace",
    "television", "dresser", "bench", "vase", "clock", "curtain", "pillow",
)

# Edge lengths and the minimum distance between viewpoints in meters
EDGE_LENGTH_RANGE = (2.0, 4.0)
MIN_VIEWPOINT_DISTANCE = 1.5

# Standard deviation of the observation noise
OBSERVATION_NOISE = 0.05

# Number of extra dimensions appended to the label features of an image
HEADING_ENCODING_DIM = 3

# Relative headings beyond this angle (in degrees) are verbalized as a turn
TURN_THRESHOLD = 45.0
TURN_AROUND_THRESHOLD = 135.0

SPLITS = ("train", "val_seen", "val_unseen")


def wrap_angle(angle):
    """Map an angle in radians to [-pi, pi)"""
    return (angle + math.pi) % (2 * math.pi) - math.pi


def label_feature(label, dim):
    """The fixed visual feature vector of an object label"""
    rng = np.random.default_rng(stable_seed("label", label, dim))
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


class SceneObject(pyrsistent.PClass):
    label = pyrsistent.field(type=str, mandatory=True)
    salience = pyrsistent.field(type=float, mandatory=True)


class GraphWorld:
    def __init__(self, world_id, seed, positions, edges, scenes, side_length=30.0, feature_dim=32):
        """A navigation graph with object-annotated directional scenes

        :param world_id:
            The identifier of the world used by episodes
        :param seed:
            The seed the world was generated from. It also seeds the
            observation noise.
        :param positions:
            A dictionary mapping viewpoint ids to (x, y) in meters
        :param edges:
            A list of viewpoint id pairs
        :param scenes:
            A dictionary mapping (viewpoint, neighbor) to a list of :class:`SceneObject`
        """
        self.world_id = world_id
        self.seed = seed
        self.side_length = side_length
        self.feature_dim = feature_dim
        self.positions = {int(k): (float(x), float(y)) for k, (x, y) in positions.items()}
        self.scenes = {
            (int(a), int(b)): tuple(objs) for (a, b), objs in scenes.items()
        }

        self.graph = nx.Graph()
        self.graph.add_nodes_from(sorted(self.positions))
        for a, b in edges:
            self.graph.add_edge(int(a), int(b), length=self.distance(a, b))

    @property
    def viewpoints(self):
        return sorted(self.positions)

    def __len__(self):
        return len(self.positions)

    def check(self):
        """Validate the structural invariants of the world

        :raises WorldError: if the graph is disconnected or a viewpoint is isolated
        """
        if len(self) < 2 or not nx.is_connected(self.graph):
            raise WorldError(f"World {self.world_id} is not connected")
        for v in self.viewpoints:
            if self.graph.degree[v] == 0:
                raise WorldError(f"Viewpoint {v} of world {self.world_id} has no neighbor")
            for n in self.neighbors(v):
                if (v, n) not in self.scenes:
                    raise WorldError(f"Missing scene from {v} towards {n}")
        return self

    def _check_viewpoint(self, viewpoint):
        if viewpoint not in self.positions:
            raise WorldError(f"Unknown viewpoint {viewpoint} in world {self.world_id}")

    def neighbors(self, viewpoint):
        """The navigable viewpoints, sorted by id"""
        self._check_viewpoint(viewpoint)
        return sorted(self.graph.neighbors(viewpoint))

    def distance(self, a, b):
        """The Euclidean distance between two viewpoints"""
        (xa, ya), (xb, yb) = self.positions[int(a)], self.positions[int(b)]
        return math.hypot(xb - xa, yb - ya)

    def heading(self, a, b):
        """The heading from a towards b in radians, counter-clockwise from the x axis"""
        (xa, ya), (xb, yb) = self.positions[int(a)], self.positions[int(b)]
        return math.atan2(yb - ya, xb - xa)

    def edge_length(self, a, b):
        return self.graph.edges[a, b]["length"]

    def path_length(self, path):
        """The summed edge lengths of a viewpoint sequence"""
        return float(sum(self.edge_length(a, b) for a, b in zip(path, path[1:]) if a != b))

    @pytools.memoize_method
    def _dijkstra(self, source):
        return nx.single_source_dijkstra(self.graph, source, weight="length")

    def geodesic(self, a, b):
        """The length of the shortest path between two viewpoints"""
        return shortest_paths(self, b)[0][a]

    def next_hop(self, current, goal):
        """The neighbor of current on a shortest path to goal (current if it is the goal)"""
        _, pred = shortest_paths(self, goal)
        return pred.get(current, current)

    def shortest_path(self, start, goal):
        """The shortest path from start to goal, consistent with :meth:`next_hop`"""
        path = [start]
        while path[-1] != goal:
            path.append(self.next_hop(path[-1], goal))
        return path

    def _serialize(self):
        return stamp(
            {
                "world_id": self.world_id,
                "seed": self.seed,
                "side_length": self.side_length,
                "feature_dim": self.feature_dim,
                "viewpoints": [
                    {"id": v, "x": self.positions[v][0], "y": self.positions[v][1]}
                    for v in self.viewpoints
                ],
                "edges": [sorted([a, b]) for a, b in sorted(self.graph.edges)],
                "scenes": [
                    {
                        "viewpoint": a,
                        "neighbor": b,
                        "objects": [dict(o.serialize()) for o in objs],
                    }
                    for (a, b), objs in sorted(self.scenes.items())
                ],
            }
        )

    @classmethod
    def _deserialize(cls, data):
        jsonschema.validate(instance=data, schema=load_schema("world.json"))
        data = upgrade_document(data, "world")
        return cls(
            world_id=data["world_id"],
            seed=data["seed"],
            positions={v["id"]: (v["x"], v["y"]) for v in data["viewpoints"]},
            edges=[tuple(e) for e in data["edges"]],
            scenes={
                (s["viewpoint"], s["neighbor"]): [
                    SceneObject(label=o["label"], salience=float(o["salience"]))
                    for o in s["objects"]
                ]
                for s in data["scenes"]
            },
            side_length=data["side_length"],
            feature_dim=data["feature_dim"],
        ).check()


def shortest_paths(world, source):
    """Metric single-source shortest paths

    :returns:
        A tuple of a dictionary of distances and a dictionary mapping every
        reachable viewpoint to its predecessor on a shortest path from source.
    """
    world._check_viewpoint(source)
    dist, paths = world._dijkstra(source)
    pred = {v: p[-2] for v, p in paths.items() if len(p) > 1}
    return dist, pred


def _sample_labels(rng, count):
    # Zipf-like label frequencies, the first labels are the most common ones
    weights = 1.0 / np.arange(1, len(OBJECT_LABELS) + 1)
    return rng.choice(len(OBJECT_LABELS), size=count, p=weights / weights.sum())


def generate_world(size, seed, world_id=None, side_length=30.0, feature_dim=32, max_degree=5, max_objects=8):
    """Generate a random connected navigation world

    Viewpoints are grown as a random tree with edges of 2-4 meters inside a
    square of the given side length. Additional edges are inserted between
    close viewpoints. Every directed edge gets a scene of objects.

    :param size:
        The number of viewpoints, at least 2
    :param seed:
        The random seed, identical seeds produce identical worlds
    :raises WorldError: if the viewpoints do not fit into the square
    """
    if size < 2:
        raise WorldError("A world needs at least two viewpoints")
    if world_id is None:
        world_id = f"world-{seed}"

    rng = np.random.default_rng(seed)
    lo, hi = EDGE_LENGTH_RANGE
    positions = {0: tuple(rng.uniform(0.0, side_length, size=2))}
    edges = []
    degree = {0: 0}

    for v in range(1, size):
        for _ in range(1000):
            parent = int(rng.integers(0, v))
            if degree[parent] >= max_degree:
                continue
            angle = rng.uniform(-math.pi, math.pi)
            length = rng.uniform(lo, hi)
            x = positions[parent][0] + length * math.cos(angle)
            y = positions[parent][1] + length * math.sin(angle)
            if not (0.0 <= x <= side_length and 0.0 <= y <= side_length):
                continue
            if any(
                math.hypot(x - px, y - py) < MIN_VIEWPOINT_DISTANCE
                for px, py in positions.values()
            ):
                continue
            positions[v] = (x, y)
            edges.append((parent, v))
            degree[parent] += 1
            degree[v] = 1
            break
        else:
            raise WorldError(
                f"Cannot place {size} viewpoints into a {side_length}m square"
            )

    # Shortcuts between close viewpoints
    connected = {frozenset(e) for e in edges}
    for a in range(size):
        for b in range(a + 1, size):
            if frozenset((a, b)) in connected:
                continue
            d = math.dist(positions[a], positions[b])
            if not lo <= d <= hi:
                continue
            if degree[a] >= max_degree or degree[b] >= max_degree:
                continue
            if rng.uniform() < 0.5:
                edges.append((a, b))
                degree[a] += 1
                degree[b] += 1

    scenes = {}
    for a, b in edges:
        for src, dst in ((a, b), (b, a)):
            count = int(rng.integers(1, max_objects + 1))
            labels = _sample_labels(rng, count)
            saliences = rng.uniform(0.1, 1.0, size=count)
            scenes[src, dst] = [
                SceneObject(label=OBJECT_LABELS[l], salience=float(s))
                for l, s in zip(labels, saliences)
            ]

    world = GraphWorld(
        world_id=world_id,
        seed=seed,
        positions=positions,
        edges=edges,
        scenes=scenes,
        side_length=side_length,
        feature_dim=feature_dim,
    ).check()
    logger.debug(f"Generated world {world_id} with {size} viewpoints and {len(edges)} edges")
    return world


def save_world(world, filename):
    filename = check_file_extension(filename, [".json"], ".json")
    with open(filename, "w") as f:
        json.dump(world._serialize(), f, sort_keys=True)
    return filename


def load_world(filename):
    with open(locate_file(filename), "r") as f:
        return GraphWorld._deserialize(json.load(f))


#
# Observations
#


class PanoramaObservation:
    def __init__(self, viewpoint, neighbors, images, object_labels, object_mask, kappa, headings):
        """What the agent perceives at a viewpoint

        :param neighbors:
            The navigable viewpoints in action order
        :param images:
            The (n, feature_dim + 3) array of image features
        :param object_labels:
            The (n, K) array of label strings (empty strings for padding)
        :param object_mask:
            The (n, K) boolean array, True marks padding objects
        :param kappa:
            For every neighbor, the list of its image indices
        :param headings:
            For every neighbor, the absolute heading towards it in radians
        """
        self.viewpoint = viewpoint
        self.neighbors = list(neighbors)
        self.images = images
        self.object_labels = object_labels
        self.object_mask = object_mask
        self.kappa = [list(k) for k in kappa]
        self.headings = list(headings)

    @property
    def n_images(self):
        return self.images.shape[0]

    @property
    def n_actions(self):
        """The number of navigable neighbors plus the stop action"""
        return len(self.neighbors) + 1

    @property
    def stop_action(self):
        return len(self.neighbors)

    def action_for(self, viewpoint):
        """The action index that moves to the given viewpoint (or stops there)"""
        if viewpoint == self.viewpoint:
            return self.stop_action
        try:
            return self.neighbors.index(viewpoint)
        except ValueError:
            raise WorldError(f"Viewpoint {viewpoint} is not navigable from {self.viewpoint}")

    def labels_of(self, image):
        return [l for l, m in zip(self.object_labels[image], self.object_mask[image]) if not m]


def elevation_angles(elevations):
    if elevations == 1:
        return [0.0]
    return list(np.linspace(-math.pi / 6, math.pi / 6, elevations))


def observe(world, viewpoint, heading=0.0, elevations=1, k_objects=6, n_max=16):
    """The panoramic observation at a viewpoint

    There is one image per navigable neighbor and elevation. The image
    features are the salience-weighted mean of the label features of the
    visible objects, followed by the cosine and sine of the heading relative
    to the agent and the elevation angle, plus Gaussian noise seeded by the
    world and the position only.

    :param heading:
        The absolute heading of the agent in radians
    :raises WorldError: for unknown viewpoints or too many images
    """
    neighbors = world.neighbors(viewpoint)
    n = len(neighbors) * elevations
    if n > n_max:
        raise WorldError(
            f"Viewpoint {viewpoint} needs {n} images, but observations hold at most {n_max}"
        )

    dim = world.feature_dim + HEADING_ENCODING_DIM
    images = np.zeros((n, dim))
    labels = np.full((n, k_objects), "", dtype=object)
    mask = np.ones((n, k_objects), dtype=bool)
    kappa = []
    headings = []

    for k, neighbor in enumerate(neighbors):
        objects = sorted(world.scenes[viewpoint, neighbor], key=lambda o: (-o.salience, o.label))
        visible = objects[:k_objects]
        absolute = world.heading(viewpoint, neighbor)
        relative = wrap_angle(absolute - heading)
        headings.append(absolute)

        pooled = np.zeros(world.feature_dim)
        total = sum(o.salience for o in visible)
        for o in visible:
            pooled += o.salience * label_feature(o.label, world.feature_dim)
        if total > 0:
            pooled /= total

        group = []
        for e, elevation in enumerate(elevation_angles(elevations)):
            j = k * elevations + e
            noise = np.random.default_rng(
                stable_seed(world.seed, viewpoint, neighbor, e)
            ).normal(scale=OBSERVATION_NOISE, size=dim)
            images[j] = (
                np.concatenate(
                    [pooled, [math.cos(relative), math.sin(relative), math.sin(elevation)]]
                )
                + noise
            )
            for i, o in enumerate(visible):
                labels[j, i] = o.label
                mask[j, i] = False
            group.append(j)
        kappa.append(group)

    return PanoramaObservation(
        viewpoint=viewpoint,
        neighbors=neighbors,
        images=images,
        object_labels=labels,
        object_mask=mask,
        kappa=kappa,
        headings=headings,
    )


def step_env(world, viewpoint, action):
    """Execute an action at a viewpoint

    Actions index the sorted neighbors, the index after the last neighbor
    is the stop action.

    :returns: A tuple of the new viewpoint and whether the episode ended
    """
    neighbors = world.neighbors(viewpoint)
    if not 0 <= action <= len(neighbors):
        raise WorldError(
            f"Invalid action {action} at viewpoint {viewpoint} with {len(neighbors)} neighbors"
        )
    if action == len(neighbors):
        return viewpoint, True
    return neighbors[action], False


#
# Episodes
#


class Episode(pyrsistent.PClass):
    episode_id = pyrsistent.field(type=str, mandatory=True)
    world_id = pyrsistent.field(type=str, mandatory=True)
    instruction = pyrsistent.field(type=str, mandatory=True)
    gold_parse = pyrsistent.field(type=GoldAnnotation, mandatory=True)
    start = pyrsistent.field(type=int, mandatory=True)
    goal = pyrsistent.field(type=int, mandatory=True)
    gold_path = pyrsistent.pvector_field(int)
    split = pyrsistent.field(type=str, initial="train")
    start_heading = pyrsistent.field(type=float, initial=0.0)
    __invariant__ = lambda e: (
        (len(e.gold_path) > 0 and e.gold_path[0] == e.start and e.gold_path[-1] == e.goal,
         "Gold path must lead from start to goal"),
        (e.split in SPLITS, f"Unknown split {e.split}"),
    )

    def _serialize(self):
        return stamp(
            {
                "id": self.episode_id,
                "world_id": self.world_id,
                "instruction": self.instruction,
                "gold_parse": self.gold_parse._serialize(),
                "start": self.start,
                "goal": self.goal,
                "gold_path": list(self.gold_path),
                "split": self.split,
                "start_heading": self.start_heading,
            }
        )

    @classmethod
    def _deserialize(cls, data):
        data = upgrade_document(data, "episode")
        jsonschema.validate(instance=data, schema=load_schema("episode.json"))
        return cls(
            episode_id=data["id"],
            world_id=data["world_id"],
            instruction=data["instruction"],
            gold_parse=GoldAnnotation._deserialize(data["gold_parse"]),
            start=data["start"],
            goal=data["goal"],
            gold_path=data["gold_path"],
            split=data["split"],
            start_heading=float(data["start_heading"]),
        )


def save_episodes(episodes, filename):
    dump_jsonl([e._serialize() for e in episodes], filename)
    return filename


def load_episodes(filename):
    return [Episode._deserialize(d) for d in load_jsonl(locate_file(filename))]


# Verb phrases of movement clauses, all followed by a landmark
_MOVE_PHRASES = (
    "walk past",
    "walk to",
    "walk through",
    "walk towards",
    "walk into",
    "go past",
    "head towards",
    "move to",
)

_STOP_PHRASES = ("stop", "stop at", "wait at")

# Connectors between clauses: the closing punctuation followed by the words
# opening the next clause
_CONNECTORS = ((",", "and"), (",", "then"), (".",))


class _InstructionBuilder:
    """Assemble template clauses and record their gold configurations"""

    def __init__(self):
        self.tokens = []
        self.configs = []
        self._sentence_start = True

    def clause(self, opener, phrase, landmark=None):
        """Append a clause with optional opening words, a verb phrase and a landmark"""
        start = len(self.tokens)
        self.tokens.extend(opener)
        verb = phrase.split()
        if self._sentence_start:
            verb[0] = verb[0].capitalize()
            self._sentence_start = False
        motion = Span(start=len(self.tokens), end=len(self.tokens) + len(verb))
        self.tokens.extend(verb)

        landmarks = []
        if landmark is not None:
            landmarks.append(Span(start=len(self.tokens), end=len(self.tokens) + 2))
            self.tokens.extend(["the", landmark])

        self.configs.append(
            dict(start=start, motion=motion, landmarks=landmarks)
        )

    def punctuation(self, mark):
        self.tokens.append(mark)
        if mark == ".":
            self._sentence_start = True

    def build(self, instruction_id):
        ends = [c["start"] for c in self.configs[1:]] + [len(self.tokens)]
        configurations = [
            SpatialConfiguration(
                tokens=Span(start=c["start"], end=end),
                motion_indicator=c["motion"],
                landmarks=c["landmarks"],
                main_landmark=0 if c["landmarks"] else None,
                delimiter_pos=end,
            )
            for c, end in zip(self.configs, ends)
        ]

        text = " ".join(self.tokens)
        for mark in ",.":
            text = text.replace(f" {mark}", mark)
        if tokenize(text) != self.tokens:
            raise WorldError(f"Template tokens do not survive tokenization: {text}")

        return text, GoldAnnotation(instruction_id=instruction_id, configurations=configurations)


def _distinctive_object(world, viewpoint, neighbor):
    """The most salient object label towards neighbor, preferring labels unseen in other directions"""
    objects = sorted(world.scenes[viewpoint, neighbor], key=lambda o: (-o.salience, o.label))
    elsewhere = {
        o.label
        for n in world.neighbors(viewpoint)
        if n != neighbor
        for o in world.scenes[viewpoint, n]
    }
    for o in objects:
        if o.label not in elsewhere:
            return o.label
    return objects[0].label


def describe_path(world, path, start_heading, rng, instruction_id="0"):
    """Verbalize a viewpoint path with templates

    Every hop produces an optional turn clause (when the direction changes
    by more than 45 degrees) and a movement clause naming the most
    distinctive object in the direction of the hop. A final clause stops the
    agent.

    :returns: The instruction text and its gold annotation
    """
    builder = _InstructionBuilder()
    heading = start_heading

    def connect():
        if not builder.tokens:
            return []
        words = _CONNECTORS[int(rng.integers(0, len(_CONNECTORS)))]
        builder.punctuation(words[0])
        return list(words[1:])

    for a, b in zip(path, path[1:]):
        direction = world.heading(a, b)
        turn = math.degrees(wrap_angle(direction - heading))
        if abs(turn) > TURN_AROUND_THRESHOLD:
            builder.clause(connect(), "turn around")
        elif turn > TURN_THRESHOLD:
            builder.clause(connect(), "turn left")
        elif turn < -TURN_THRESHOLD:
            builder.clause(connect(), "turn right")

        label = _distinctive_object(world, a, b)
        if label == "stairs":
            phrase = "go up" if rng.uniform() < 0.5 else "go down"
        else:
            phrase = _MOVE_PHRASES[int(rng.integers(0, len(_MOVE_PHRASES)))]
        builder.clause(connect(), phrase, label)
        heading = direction

    phrase = _STOP_PHRASES[int(rng.integers(0, len(_STOP_PHRASES)))]
    landmark = None
    if phrase != "stop" and len(path) > 1:
        landmark = _distinctive_object(world, path[-2], path[-1])
    elif phrase != "stop":
        phrase = "stop"
    builder.clause(connect(), phrase, landmark)
    builder.punctuation(".")

    return builder.build(str(instruction_id))


def generate_episode(world, min_path, max_path, seed, episode_id=None, split="train"):
    """Sample an episode whose gold path has between min_path and max_path hops

    :raises WorldError: if the world has no such path
    """
    rng = np.random.default_rng(seed)
    if episode_id is None:
        episode_id = f"{world.world_id}-{seed}"

    candidates = []
    for start in world.viewpoints:
        for goal in world.viewpoints:
            if start == goal:
                continue
            hops = len(world.shortest_path(start, goal)) - 1
            if min_path <= hops <= max_path:
                candidates.append((start, goal))
    if not candidates:
        raise WorldError(
            f"World {world.world_id} has no path with {min_path} to {max_path} hops"
        )

    start, goal = candidates[int(rng.integers(0, len(candidates)))]
    path = world.shortest_path(start, goal)
    start_heading = float(rng.uniform(-math.pi, math.pi))
    instruction, gold = describe_path(world, path, start_heading, rng, episode_id)

    return Episode(
        episode_id=episode_id,
        world_id=world.world_id,
        instruction=instruction,
        gold_parse=gold,
        start=start,
        goal=goal,
        gold_path=path,
        split=split,
        start_heading=start_heading,
    )


def generate_corpus(n, seed, viewpoints=12, per_world=10):
    """Generate templated instructions with gold annotations

    :returns: A list of :class:`Episode` spread over several worlds
    """
    episodes = []
    w = 0
    while len(episodes) < n:
        world = generate_world(viewpoints, stable_seed(seed, "corpus", w), world_id=f"corpus-{w}")
        for j in range(min(per_world, n - len(episodes))):
            episodes.append(
                generate_episode(
                    world, 1, 4, stable_seed(seed, "corpus", w, j), episode_id=f"corpus-{w}-{j}"
                )
            )
        w += 1
    return episodes


#
# Benchmarks
#


class Benchmark:
    def __init__(self, config, worlds, episodes):
        """Worlds and split episodes of a navigation benchmark

        :param config:
            The :class:`~spcnav.config.BenchmarkConfig` used to build it
        :param worlds:
            A dictionary mapping world ids to :class:`GraphWorld`
        :param episodes:
            A list of :class:`Episode`
        """
        self.config = config
        self.worlds = worlds
        self.episodes = list(episodes)

    def split(self, name):
        if name not in SPLITS:
            raise WorldError(f"Unknown split {name}")
        return [e for e in self.episodes if e.split == name]

    def world_of(self, episode):
        try:
            return self.worlds[episode.world_id]
        except KeyError:
            raise WorldError(f"Episode {episode.episode_id} references unknown world {episode.world_id}")


def build_benchmark(config):
    """Materialize a benchmark specification into worlds and episodes

    Seen worlds provide the training episodes and the seen validation
    episodes, unseen worlds only provide unseen validation episodes.

    :param config:
        A :class:`~spcnav.config.BenchmarkConfig`
    """
    worlds = {}
    episodes = []

    def _world(prefix, i):
        world_id = f"{prefix}{i:03d}"
        worlds[world_id] = generate_world(
            config.viewpoints,
            stable_seed(config.seed, world_id),
            world_id=world_id,
            side_length=config.side_length,
            feature_dim=config.feature_dim,
            max_degree=config.max_degree,
        )
        return worlds[world_id]

    for i in range(config.train_worlds):
        world = _world("seen", i)
        for j in range(config.episodes_per_world):
            split = "val_seen" if j < config.val_seen_per_world else "train"
            episodes.append(
                generate_episode(
                    world,
                    config.min_path,
                    config.max_path,
                    stable_seed(config.seed, world.world_id, j),
                    episode_id=f"{world.world_id}-{j:02d}",
                    split=split,
                )
            )

    for i in range(config.unseen_worlds):
        world = _world("unseen", i)
        for j in range(config.episodes_per_world):
            episodes.append(
                generate_episode(
                    world,
                    config.min_path,
                    config.max_path,
                    stable_seed(config.seed, world.world_id, j),
                    episode_id=f"{world.world_id}-{j:02d}",
                    split="val_unseen",
                )
            )

    logger.info(
        f"Built benchmark {config.name}: {len(worlds)} worlds, "
        + ", ".join(f"{s} {sum(e.split == s for e in episodes)}" for s in SPLITS)
    )
    return Benchmark(config, worlds, episodes)


def save_benchmark(benchmark, directory):
    """Write all worlds and the episodes of a benchmark into a directory"""
    os.makedirs(os.path.join(directory, "worlds"), exist_ok=True)
    written = []
    for world_id, world in sorted(benchmark.worlds.items()):
        written.append(save_world(world, os.path.join(directory, "worlds", f"{world_id}.json")))
    written.append(save_episodes(benchmark.episodes, os.path.join(directory, "episodes.jsonl")))
    with open(os.path.join(directory, "benchmark.json"), "w") as f:
        json.dump(benchmark.config._serialize(), f, indent=2, sort_keys=True)
    written.append(os.path.join(directory, "benchmark.json"))
    return written


def load_benchmark(directory):
    """Read a benchmark written by :func:`save_benchmark`"""
    from spcnav.config import BenchmarkConfig

    directory = locate_file(directory)
    with open(os.path.join(directory, "benchmark.json"), "r") as f:
        config = BenchmarkConfig(**json.load(f))

    worlds = {}
    world_dir = os.path.join(directory, "worlds")
    for name in sorted(os.listdir(world_dir)):
        world = load_world(os.path.join(world_dir, name))
        worlds[world.world_id] = world

    return Benchmark(config, worlds, load_episodes(os.path.join(directory, "episodes.jsonl")))
