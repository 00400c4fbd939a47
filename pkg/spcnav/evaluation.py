"""Rollouts, navigation metrics, ablations and attention traces"""

from spcnav.agent import parse_cached, select_action
from spcnav.tensorcore import no_grad
from spcnav.utils import SpcNavError
from spcnav.world import observe, step_env

import concurrent.futures
import csv
import json
import logging
import math
import numpy as np
import os

logger = logging.getLogger("spcnav")

# The success radius in meters
SUCCESS_THRESHOLD = 3.0

# The rows of the ablation table as (name, use_motion, use_landmark, use_similarity)
ABLATION_VARIANTS = (
    ("base", False, False, False),
    ("+M", True, False, False),
    ("+M+L", True, True, False),
    ("+M+L+S", True, True, True),
)


class EvaluationError(SpcNavError):
    pass


class TrajectoryResult:
    def __init__(self, episode, world, path, traces, threshold=SUCCESS_THRESHOLD):
        """The outcome of rolling out the agent on one episode

        :param episode:
            The :class:`~spcnav.world.Episode`
        :param world:
            The :class:`~spcnav.world.GraphWorld` of the episode
        :param path:
            The visited viewpoints, starting with the start viewpoint
        :param traces:
            One dictionary per step with the state attention, the controller
            output, the image attention weights and the action distribution
        """
        self.episode_id = episode.episode_id
        self.split = episode.split
        self.path = list(path)
        self.traces = traces
        self.trajectory_length = world.path_length(self.path)
        self.final_distance = world.geodesic(self.path[-1], episode.goal)
        self.shortest_length = world.geodesic(episode.start, episode.goal)
        self.success = self.final_distance <= threshold
        self.closest_distance = min(world.geodesic(v, episode.goal) for v in self.path)
        self.ndtw = ndtw(world, self.path, list(episode.gold_path), threshold)

    @property
    def steps(self):
        return len(self.traces)

    def _serialize(self):
        return {
            "episode_id": self.episode_id,
            "split": self.split,
            "path": self.path,
            "trajectory_length": self.trajectory_length,
            "final_distance": self.final_distance,
            "shortest_length": self.shortest_length,
            "success": bool(self.success),
            "closest_distance": self.closest_distance,
            "ndtw": self.ndtw,
            "steps": self.steps,
        }


def ndtw(world, path, reference, threshold=SUCCESS_THRESHOLD):
    """Normalized dynamic time warping between a path and a reference path

    :raises EvaluationError: if the reference or the path is empty
    """
    n, m = len(reference), len(path)
    if n == 0:
        raise EvaluationError("Cannot compute nDTW against an empty reference path")
    if m == 0:
        raise EvaluationError("Cannot compute nDTW of an empty path")
    cost = np.full((n + 1, m + 1), np.inf)
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d = world.geodesic(reference[i - 1], path[j - 1])
            cost[i, j] = d + min(cost[i - 1, j], cost[i, j - 1], cost[i - 1, j - 1])
    return float(math.exp(-cost[n, m] / (n * threshold)))


def rollout(agent, world, episode, mode="greedy", threshold=SUCCESS_THRESHOLD, rng=None):
    """Roll out the agent on an episode without recording gradients

    The agent stops when it selects the stop action or after the maximum
    number of steps.

    :param mode:
        :code:`greedy` for inference, :code:`teacher` to follow the
        shortest path to the goal, :code:`sample` to sample actions
    :returns: A :class:`TrajectoryResult`
    """
    config = agent.config
    with no_grad():
        bank = agent.encode(parse_cached(episode.instruction))
        state = agent.init_state(bank)

        viewpoint = episode.start
        heading = episode.start_heading
        path = [viewpoint]
        traces = []

        for _ in range(config.max_steps):
            obs = observe(
                world,
                viewpoint,
                heading=heading,
                elevations=config.elevations,
                k_objects=config.k_objects,
                n_max=config.n_max,
            )
            state, out = agent.step(state, bank, obs)
            traces.append(
                {
                    "alpha": out.alpha.data.tolist(),
                    "gamma": None if out.gamma is None else out.gamma.data.tolist(),
                    "image_weights": out.image_weights.data.tolist(),
                    "p": out.probabilities.tolist(),
                }
            )

            teacher = obs.action_for(world.next_hop(viewpoint, episode.goal))
            action = select_action(out.probabilities, mode=mode, rng=rng, teacher_action=teacher)
            new_viewpoint, done = step_env(world, viewpoint, action)
            if done:
                break
            heading = world.heading(viewpoint, new_viewpoint)
            viewpoint = new_viewpoint
            path.append(viewpoint)

    return TrajectoryResult(episode, world, path, traces, threshold=threshold)


def run_greedy(agent, benchmark, episodes=None, jobs=1, threshold=SUCCESS_THRESHOLD, mode="greedy"):
    """Evaluate the agent on a list of episodes

    Episodes are rolled out concurrently on a thread pool. The agent is only
    read, the order of the results follows the order of the episodes.

    :param benchmark:
        The :class:`~spcnav.world.Benchmark` providing the worlds
    :param episodes:
        The episodes to evaluate, defaults to all validation episodes
    """
    if episodes is None:
        episodes = [e for e in benchmark.episodes if e.split != "train"]

    def _run(episode):
        return rollout(agent, benchmark.world_of(episode), episode, mode=mode, threshold=threshold)

    if jobs == 1:
        return [_run(e) for e in episodes]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run, episodes))


def metrics(results, threshold=SUCCESS_THRESHOLD):
    """Aggregate navigation metrics

    :returns:
        A dictionary with navigation error (:code:`ne`), success rate
        (:code:`sr`), success weighted by path length (:code:`spl`), oracle
        success rate, nDTW, SDTW and the mean trajectory length.
    :raises EvaluationError: for an empty result set
    """
    results = list(results)
    if not results:
        raise EvaluationError("Cannot compute metrics of an empty result set")

    success = np.array([r.final_distance <= threshold for r in results], dtype=np.float64)
    shortest = np.array([r.shortest_length for r in results])
    taken = np.array([r.trajectory_length for r in results])
    longest = np.maximum(shortest, taken)
    ratio = np.divide(shortest, longest, out=np.ones_like(shortest), where=longest > 0)
    ndtws = np.array([r.ndtw for r in results])

    return {
        "episodes": len(results),
        "threshold": float(threshold),
        "ne": float(np.mean([r.final_distance for r in results])),
        "sr": float(np.mean(success)),
        "spl": float(np.mean(success * ratio)),
        "oracle_sr": float(np.mean([r.closest_distance <= threshold for r in results])),
        "ndtw": float(np.mean(ndtws)),
        "sdtw": float(np.mean(success * ndtws)),
        "path_length": float(np.mean(taken)),
    }


def split_metrics(results, threshold=SUCCESS_THRESHOLD):
    """Metrics per split of a mixed list of results"""
    by_split = {}
    for r in results:
        by_split.setdefault(r.split, []).append(r)
    return {split: metrics(rs, threshold) for split, rs in sorted(by_split.items())}


def run_ablation(
    benchmark, model_config, train_config, seeds=(0,), variants=ABLATION_VARIANTS, jobs=1, episodes=None
):
    """Train and evaluate the ablation variants with identical seeds

    :param episodes:
        The episodes to evaluate, defaults to all validation episodes
    :returns:
        A list of rows with the variant name, the seed and the metrics per
        evaluated split, followed by one mean row per variant.
    """
    from spcnav.train import build_agent, train_loop

    rows = []
    for name, use_motion, use_landmark, use_similarity in variants:
        per_seed = []
        for seed in seeds:
            config = model_config.copy(
                use_motion=use_motion,
                use_landmark=use_landmark,
                use_similarity=use_similarity,
                init_seed=seed,
            )
            agent = build_agent(config, benchmark.split("train"))
            train_loop(agent, benchmark, train_config.copy(seed=seed), jobs=jobs)
            results = run_greedy(
                agent, benchmark, episodes, jobs=jobs, threshold=train_config.success_threshold
            )
            summary = split_metrics(results, train_config.success_threshold)
            per_seed.append(summary)
            rows.append({"variant": name, "seed": seed, "parameters": agent.parameter_count(), "splits": summary})
            logger.info(f"Ablation {name} (seed {seed}): {json.dumps(summary, sort_keys=True)}")

        mean_row = {"variant": name, "seed": None, "splits": {}}
        for split in per_seed[0]:
            mean_row["splits"][split] = {
                key: float(np.mean([s[split][key] for s in per_seed]))
                for key in ("ne", "sr", "spl")
            }
        rows.append(mean_row)

    return rows


def attention_matrix(result):
    """The steps x m matrix of state attention values of a trajectory"""
    if not result.traces:
        raise EvaluationError(f"Trajectory of episode {result.episode_id} has no steps")
    return np.array([t["alpha"] for t in result.traces])


def export_attention(result, texts, filename, initial=True):
    """Write the state attention of a trajectory as CSV with a JSON sidecar

    :param result:
        A :class:`TrajectoryResult`
    :param texts:
        The configuration texts of the instruction
    :param filename:
        The CSV file to write, the sidecar gets the extension :code:`.json`
    :param initial:
        Whether to prepend the initial distribution focused on the first configuration
    :returns: The names of the written files
    """
    matrix = attention_matrix(result)
    if initial:
        first = np.zeros(matrix.shape[1])
        first[0] = 1.0
        matrix = np.vstack([first, matrix])

    with open(filename, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"c{i}" for i in range(matrix.shape[1])])
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])

    sidecar = os.path.splitext(filename)[0] + ".json"
    with open(sidecar, "w") as f:
        json.dump(
            {
                "episode_id": result.episode_id,
                "configurations": list(texts),
                "steps": int(matrix.shape[0]),
                "initial_row": bool(initial),
                "path": result.path,
            },
            f,
            indent=2,
            sort_keys=True,
        )
    return filename, sidecar


def save_results(results, filename):
    with open(filename, "w") as f:
        for r in results:
            f.write(json.dumps(r._serialize(), sort_keys=True))
            f.write("\n")
    return filename
