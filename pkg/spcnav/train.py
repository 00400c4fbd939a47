"""Training of the agent with imitation and sampled rollouts

Each episode is rolled out either with the teacher actions or with actions
sampled from the agent's own distribution. At every step, the loss combines
the cross-entropy of the teacher action with the squared error of the
predicted progress towards the goal.
"""

from spcnav.agent import SpcNavAgent, Vocabulary, load_agent, parse_cached, select_action
from spcnav.config import TrainConfig
from spcnav.evaluation import metrics, run_greedy
from spcnav.tensorcore import adam_step, backward, cross_entropy, mean, mse, stack
from spcnav.utils import SpcNavError, dump_jsonl
from spcnav.world import observe, step_env

import json
import logging
import numpy as np
import os
import time

logger = logging.getLogger("spcnav")

# Names of the files written into the output directory of a training run
METRICS_FILE = "metrics.jsonl"
CHECKPOINT_FILE = "checkpoint.npz"
BEST_CHECKPOINT_FILE = "best.npz"


class TrainError(SpcNavError):
    pass


def progress_target(world, current, goal, start):
    """The normalized progress of current on the way from start to goal

    :returns: :code:`1 - d(current, goal) / d(start, goal)` clipped to [0, 1]
    """
    total = world.geodesic(start, goal)
    if total == 0.0:
        return 1.0
    return float(np.clip(1.0 - world.geodesic(current, goal) / total, 0.0, 1.0))


def build_agent(model_config, episodes):
    """Create an untrained agent with the vocabulary of the given episodes"""
    vocabulary = Vocabulary.build(parse_cached(e.instruction).token_stream for e in episodes)
    return SpcNavAgent(model_config, vocabulary)


def episode_loss(agent, world, episode, mode, progress_weight=0.5, rng=None):
    """Roll out an episode and accumulate the training loss

    The teacher action is the next viewpoint on a shortest path from the
    current position of the agent, so it is recomputed whenever a sampled
    action leaves the gold path. The last possible step always has stop as
    teacher action.

    :param mode:
        Either :code:`teacher` to execute the teacher actions or
        :code:`sample` to execute actions sampled from the agent
    :returns:
        A tuple of the mean loss over steps and the visited viewpoints
    """
    config = agent.config
    bank = agent.encode(parse_cached(episode.instruction))
    state = agent.init_state(bank)

    viewpoint = episode.start
    heading = episode.start_heading
    path = [viewpoint]
    terms = []

    for t in range(config.max_steps):
        obs = observe(
            world,
            viewpoint,
            heading=heading,
            elevations=config.elevations,
            k_objects=config.k_objects,
            n_max=config.n_max,
        )
        state, out = agent.step(state, bank, obs)

        last = t == config.max_steps - 1
        if last:
            teacher = obs.stop_action
        else:
            teacher = obs.action_for(world.next_hop(viewpoint, episode.goal))

        term = cross_entropy(out.logits, teacher)
        if progress_weight != 0.0:
            target = progress_target(world, viewpoint, episode.goal, episode.start)
            term = term + progress_weight * mse(out.progress, target)
        terms.append(term)

        action = select_action(out.probabilities, mode=mode, rng=rng, teacher_action=teacher)
        if last:
            action = obs.stop_action
        new_viewpoint, done = step_env(world, viewpoint, action)
        if done:
            break
        heading = world.heading(viewpoint, new_viewpoint)
        viewpoint = new_viewpoint
        path.append(viewpoint)

    return mean(stack(terms)), path


class TrainState:
    def __init__(self, epoch=0, rng_state=None, best_sr=None):
        """The resumable state of the training loop besides the parameters"""
        self.epoch = epoch
        self.rng_state = rng_state
        self.best_sr = best_sr

    def _serialize(self):
        return {"epoch": self.epoch, "rng_state": self.rng_state, "best_sr": self.best_sr}

    @classmethod
    def _deserialize(cls, data):
        return cls(**data)


def _evaluate_split(agent, benchmark, split, threshold, jobs):
    episodes = benchmark.split(split)
    if not episodes:
        return None
    return metrics(run_greedy(agent, benchmark, episodes, jobs=jobs, threshold=threshold), threshold)


def train_loop(agent, benchmark, train_config, out=None, train_state=None, jobs=1):
    """Train an agent on the training split of a benchmark

    Every epoch shuffles the training episodes with the seeded random
    generator, and every batch of episodes is followed by one ADAM step.
    The agent is evaluated on both validation splits after every
    :code:`eval_every`-th epoch and after the last epoch. After each epoch,
    a line is appended to the metrics log and checkpoints are written.

    The records of epochs without evaluation carry :code:`None` (null in the
    metrics log) for :code:`sr_seen`, :code:`spl_seen`, :code:`sr_unseen` and
    :code:`spl_unseen`. A split without episodes also yields :code:`None`.
    Only evaluated epochs can produce a new best checkpoint.

    :param agent:
        The :class:`~spcnav.agent.SpcNavAgent` to train in place
    :param benchmark:
        The :class:`~spcnav.world.Benchmark`
    :param train_config:
        The :class:`~spcnav.config.TrainConfig`
    :param out:
        The output directory. If omitted, nothing is written.
    :param train_state:
        A :class:`TrainState` to resume from
    :returns: The list of per-epoch metrics records
    """
    episodes = benchmark.split("train")
    if not episodes:
        raise TrainError("Cannot train without training episodes")

    rng = np.random.default_rng(train_config.seed)
    if train_state is None:
        train_state = TrainState()
    elif train_state.rng_state is not None:
        rng.bit_generator.state = train_state.rng_state

    if out is not None:
        os.makedirs(out, exist_ok=True)
        metrics_file = os.path.join(out, METRICS_FILE)
        if train_state.epoch == 0:
            dump_jsonl([], metrics_file)

    history = []
    for epoch in range(train_state.epoch, train_config.epochs):
        started = time.perf_counter()
        teacher_probability = train_config.teacher_probability(epoch)
        order = rng.permutation(len(episodes))

        total = 0.0
        for b in range(0, len(order), train_config.batch_size):
            batch = order[b : b + train_config.batch_size]
            losses = []
            for idx in batch:
                episode = episodes[idx]
                mode = "teacher" if rng.uniform() < teacher_probability else "sample"
                loss, _ = episode_loss(
                    agent,
                    benchmark.world_of(episode),
                    episode,
                    mode,
                    progress_weight=train_config.progress_weight,
                    rng=rng,
                )
                losses.append(loss)

            batch_loss = mean(stack(losses))
            if not np.isfinite(batch_loss.item()):
                raise TrainError(f"Non-finite loss in epoch {epoch}")
            backward(batch_loss)
            adam_step(agent.parameters(), lr=train_config.lr)
            total += batch_loss.item() * len(batch)

        record = {"epoch": epoch + 1, "train_loss": total / len(order)}
        evaluate = (epoch + 1) % train_config.eval_every == 0 or epoch + 1 == train_config.epochs
        for split, suffix in (("val_seen", "seen"), ("val_unseen", "unseen")):
            summary = None
            if evaluate:
                summary = _evaluate_split(
                    agent, benchmark, split, train_config.success_threshold, jobs
                )
            record[f"sr_{suffix}"] = None if summary is None else summary["sr"]
            record[f"spl_{suffix}"] = None if summary is None else summary["spl"]
        record["wall_time"] = (
            time.perf_counter() - started if train_config.record_wall_time else None
        )
        history.append(record)

        logger.info(
            f"Epoch {record['epoch']}: loss {record['train_loss']:.4f}, "
            f"SR seen {record['sr_seen']}, SR unseen {record['sr_unseen']}"
        )

        improved = record["sr_seen"] is not None and (
            train_state.best_sr is None or record["sr_seen"] > train_state.best_sr
        )
        if improved:
            train_state.best_sr = record["sr_seen"]
        train_state.epoch = epoch + 1
        train_state.rng_state = rng.bit_generator.state

        if out is not None:
            with open(metrics_file, "a") as f:
                f.write(json.dumps(record, sort_keys=True))
                f.write("\n")
            header = dict(train=train_config._serialize(), train_state=train_state._serialize())
            agent.save(os.path.join(out, CHECKPOINT_FILE), **header)
            if improved:
                agent.save(os.path.join(out, BEST_CHECKPOINT_FILE), **header)

    return history


def resume(checkpoint):
    """Load an agent and its training state from a checkpoint

    :returns:
        A tuple of the agent, the :class:`TrainState` and the
        :class:`~spcnav.config.TrainConfig` the checkpoint was trained with
    """
    agent, header = load_agent(checkpoint)
    if "train_state" not in header or "train" not in header:
        raise TrainError(f"Checkpoint {checkpoint} does not contain a training state")
    return agent, TrainState._deserialize(header["train_state"]), TrainConfig(**header["train"])
