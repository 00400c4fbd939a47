from spcnav import __version__
from spcnav.config import BenchmarkConfig, load_run_config, save_run_config
from spcnav.evaluation import (
    ABLATION_VARIANTS,
    SUCCESS_THRESHOLD,
    export_attention,
    rollout,
    run_ablation,
    run_greedy,
    save_results,
    split_metrics,
)
from spcnav.logger import attach_file_logger, detach_file_logger
from spcnav.parse import (
    AnnotationError,
    evaluate_parser,
    load_annotations,
    load_lexicon,
    load_parsed_instructions,
    parse_instruction,
)
from spcnav.paths import load_schema, locate_benchmark, locate_file, resolve_output
from spcnav.train import (
    BEST_CHECKPOINT_FILE,
    CHECKPOINT_FILE,
    METRICS_FILE,
    build_agent,
    resume,
    train_loop,
)
from spcnav.utils import SpcNavError, dump_jsonl, file_hash, load_jsonl, stable_seed
from spcnav.versioning import stamp
from spcnav.world import (
    SPLITS,
    build_benchmark,
    generate_episode,
    generate_world,
    load_benchmark,
    load_world,
    save_benchmark,
    save_episodes,
    save_world,
)

import click
import functools
import json
import jsonschema
import logging
import os

logger = logging.getLogger("spcnav")

# The name of the run manifest written into every output directory
MANIFEST_FILE = "manifest.json"

# The name of the log file written into every output directory
LOG_FILE = "output.log"

VARIANT_NAMES = [v[0] for v in ABLATION_VARIANTS]


def _file_inputs(*paths):
    """Hash the given input files, directories are hashed file by file"""
    inputs = {}
    for path in paths:
        if path is None:
            continue
        if os.path.isdir(path):
            for root, _, files in sorted(os.walk(path)):
                for name in sorted(files):
                    filename = os.path.join(root, name)
                    inputs[os.path.abspath(filename)] = file_hash(filename)
        else:
            inputs[os.path.abspath(path)] = file_hash(path)
    return inputs


class Run:
    def __init__(self, command, arguments, out, default_name):
        """The bookkeeping of one command line invocation

        Resolves the output location, attaches the log file and writes the
        run manifest before any other artifact.
        """
        self.command = command
        self.arguments = arguments
        self.directory, self.target = resolve_output(out, default_name)
        self.handler = None

    def output(self, name):
        return os.path.join(self.directory, name)

    def __enter__(self):
        self.handler = attach_file_logger(self.output(LOG_FILE))
        logger.info(f"Running spcnav {self.command} (version {__version__})")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, click.exceptions.Exit):
            logger.info(f"spcnav {self.command} failed: {exc}")
        detach_file_logger(self.handler)
        return False

    def write_manifest(self, config, seed, inputs, outputs):
        manifest = stamp(
            {
                "command": self.command,
                "arguments": {
                    k: list(v) if isinstance(v, tuple) else v
                    for k, v in self.arguments.items()
                },
                "config": config,
                "seed": seed,
                "version": __version__,
                "inputs": _file_inputs(*inputs),
                "outputs": [os.path.abspath(o) for o in outputs],
            }
        )
        jsonschema.validate(instance=manifest, schema=load_schema("manifest.json"))
        with open(self.output(MANIFEST_FILE), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)


def handle_errors(func):
    """Report errors of the Python API as a failed run with exit code 1"""

    @functools.wraps(func)
    def _wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (SpcNavError, jsonschema.ValidationError, FileNotFoundError) as e:
            message = e.message if isinstance(e, jsonschema.ValidationError) else str(e)
            raise click.ClickException(message)

    return _wrapper


def run_options(func):
    """The options shared by all subcommands"""
    func = click.option(
        "--jobs",
        type=click.IntRange(min=1),
        default=os.cpu_count() or 1,
        help="The number of threads used for evaluation.",
        show_default="available cores",
    )(func)
    func = click.option(
        "--out",
        type=click.Path(),
        default="output",
        envvar="SPCNAV_OUT",
        help="The output directory or, if it has an extension, the primary output file.",
        show_default=True,
    )(func)
    func = click.option(
        "--config",
        "config_file",
        type=click.Path(exists=True, dir_okay=False),
        help="A versioned JSON configuration file with model and train sections.",
    )(func)
    func = click.option(
        "--seed",
        type=click.IntRange(min=0),
        default=None,
        help="The random seed, defaults to the seed of the configuration.",
    )(func)
    return func


def benchmark_options(func):
    func = click.option(
        "--data",
        type=click.Path(exists=True, file_okay=False),
        help="A benchmark directory written by gen-episodes --benchmark.",
    )(func)
    func = click.option(
        "--benchmark",
        type=str,
        help="The name of a bundled benchmark specification (e.g. ref, tiny) or a specification file.",
    )(func)
    return func


def _read_benchmark_spec(name):
    filename = locate_benchmark(name)
    with open(filename, "r") as f:
        return BenchmarkConfig(**json.load(f)), filename


def _open_benchmark(benchmark, data):
    """Build a bundled benchmark or load a materialized one

    :returns: A tuple of the benchmark and its input file
    """
    if (benchmark is None) == (data is None):
        raise click.UsageError("Exactly one of --benchmark and --data is required")
    if data is not None:
        return load_benchmark(data), data
    config, filename = _read_benchmark_spec(benchmark)
    return build_benchmark(config), filename


def _run_configs(benchmark, config_file, seed, model_overrides={}, train_overrides={}):
    """Resolve model and train configuration for a benchmark"""
    bench = benchmark.config
    model_overrides = dict(model_overrides, feature_dim=bench.feature_dim)
    train_overrides = dict(train_overrides)
    if seed is not None:
        model_overrides["init_seed"] = seed
        train_overrides["seed"] = seed
    base = {"model": bench.model, "train": bench.train}
    return load_run_config(config_file, model_overrides, train_overrides, base=base)


def _drop_none(**values):
    return {k: v for k, v in values.items() if v is not None}


def _read_instructions(filename):
    """Read instructions to parse from a text, JSON-lines or parsed corpus file

    :returns: A list of (instruction id, instruction) pairs
    """
    filename = locate_file(filename)
    ext = os.path.splitext(filename)[1].lower()
    if ext in (".conllu", ".conll"):
        return load_parsed_instructions(filename)
    if ext == ".jsonl":
        return [(str(d["id"]), d["instruction"]) for d in load_jsonl(filename)]
    if ext == ".txt":
        with open(filename, "r", encoding="utf-8") as f:
            lines = [line.strip() for line in f]
        return [(str(i), line) for i, line in enumerate(lines, start=1) if line]
    raise SpcNavError(f"Unsupported instruction file {filename}, use .txt, .jsonl or .conllu")


@click.group()
@click.version_option(version=__version__, prog_name="spcnav")
def main():
    """Command Line Interface for spcnav

    Generate worlds and episodes, parse instructions into spatial
    configurations, train and evaluate the navigation agent, run the
    ablation study and export state attention traces. Every run writes a
    manifest and a log file into its output directory.
    """


@main.command("gen-world")
@run_options
@click.option("--viewpoints", type=click.IntRange(min=2), default=30, show_default=True)
@click.option(
    "--side-length",
    type=click.FloatRange(min=0.0, min_open=True),
    default=30.0,
    show_default=True,
    help="The side length of the square the viewpoints are placed in (meters).",
)
@click.option("--feature-dim", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--max-degree", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--world-id", type=str, default="world", show_default=True)
@handle_errors
def gen_world(**args):
    """Generate a synthetic navigation world"""
    seed = args["seed"] if args["seed"] is not None else 0
    with Run("gen-world", args, args["out"], "world.json") as run:
        config = {k: args[k] for k in ("viewpoints", "side_length", "feature_dim", "max_degree")}
        run.write_manifest(config, seed, [args["config_file"]], [run.target])

        world = generate_world(
            args["viewpoints"],
            seed,
            world_id=args["world_id"],
            side_length=args["side_length"],
            feature_dim=args["feature_dim"],
            max_degree=args["max_degree"],
        )
        jsonschema.validate(instance=world._serialize(), schema=load_schema("world.json"))
        save_world(world, run.target)
        logger.info(f"Wrote world {world.world_id} to {run.target}")


@main.command("gen-episodes")
@run_options
@click.option(
    "--world",
    "world_file",
    type=click.Path(exists=True, dir_okay=False),
    help="The world file to generate episodes in.",
)
@click.option(
    "--benchmark",
    type=str,
    help="Materialize a whole benchmark specification (e.g. ref, tiny) instead.",
)
@click.option("--count", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--min-path", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--max-path", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--split", type=click.Choice(SPLITS), default="train", show_default=True)
@handle_errors
def gen_episodes(**args):
    """Generate episodes with templated instructions

    Either generates episodes in a single world file or materializes a
    benchmark specification into worlds and split episodes.
    """
    if (args["world_file"] is None) == (args["benchmark"] is None):
        raise click.UsageError("Exactly one of --world and --benchmark is required")

    if args["benchmark"] is not None:
        config, filename = _read_benchmark_spec(args["benchmark"])
        if args["seed"] is not None:
            config = config.copy(seed=args["seed"])
        with Run("gen-episodes", args, args["out"], "episodes.jsonl") as run:
            outputs = [run.output("worlds"), run.output("episodes.jsonl"), run.output("benchmark.json")]
            run.write_manifest(config._serialize(), config.seed, [filename], outputs)
            benchmark = build_benchmark(config)
            for e in benchmark.episodes:
                jsonschema.validate(instance=e._serialize(), schema=load_schema("episode.json"))
            save_benchmark(benchmark, run.directory)
        return

    if args["min_path"] > args["max_path"]:
        raise click.BadParameter("--min-path must not exceed --max-path")

    seed = args["seed"] if args["seed"] is not None else 0
    with Run("gen-episodes", args, args["out"], "episodes.jsonl") as run:
        config = {k: args[k] for k in ("count", "min_path", "max_path", "split")}
        run.write_manifest(config, seed, [args["world_file"]], [run.target])

        world = load_world(args["world_file"])
        episodes = [
            generate_episode(
                world,
                args["min_path"],
                args["max_path"],
                stable_seed(seed, world.world_id, j),
                episode_id=f"{world.world_id}-{j:02d}",
                split=args["split"],
            )
            for j in range(args["count"])
        ]
        for e in episodes:
            jsonschema.validate(instance=e._serialize(), schema=load_schema("episode.json"))
        save_episodes(episodes, run.target)
        logger.info(f"Wrote {len(episodes)} episodes to {run.target}")


@main.command("parse")
@run_options
@click.option(
    "--in",
    "input_file",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Instructions as text (one per line), episodes (.jsonl) or a dependency-parsed corpus (.conllu).",
)
@click.option(
    "--lexicon",
    type=click.Path(exists=True, dir_okay=False),
    help="A motion lexicon with one phrase per line, defaults to the bundled one.",
)
@handle_errors
def parse(**args):
    """Parse instructions into spatial configurations"""
    with Run("parse", args, args["out"], "parses.jsonl") as run:
        run.write_manifest({}, 0, [args["input_file"], args["lexicon"]], [run.target])

        lexicon = load_lexicon(args["lexicon"])
        records = []
        for instruction_id, instruction in _read_instructions(args["input_file"]):
            record = parse_instruction(instruction, lexicon=lexicon)._serialize(instruction_id)
            jsonschema.validate(instance=record, schema=load_schema("annotation.json"))
            records.append(record)
        dump_jsonl(records, run.target)
        logger.info(f"Parsed {len(records)} instructions into {run.target}")


@main.command("eval-parser")
@run_options
@click.option(
    "--gold",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Gold annotations as JSON-lines.",
)
@click.option(
    "--in",
    "input_file",
    type=click.Path(exists=True, dir_okay=False),
    help="Instructions to parse, see the parse subcommand.",
)
@click.option(
    "--pred",
    type=click.Path(exists=True, dir_okay=False),
    help="Parser output written by the parse subcommand.",
)
@click.option("--lexicon", type=click.Path(exists=True, dir_okay=False))
@handle_errors
def eval_parser(**args):
    """Score the configuration parser against gold annotations"""
    if (args["input_file"] is None) == (args["pred"] is None):
        raise click.UsageError("Exactly one of --in and --pred is required")

    with Run("eval-parser", args, args["out"], "parser_report.json") as run:
        inputs = [args["gold"], args["input_file"], args["pred"], args["lexicon"]]
        run.write_manifest({}, 0, inputs, [run.target])

        gold = load_annotations(args["gold"])
        if args["pred"] is not None:
            predicted = {a.instruction_id: a for a in load_annotations(args["pred"])}
        else:
            lexicon = load_lexicon(args["lexicon"])
            predicted = {
                instruction_id: parse_instruction(instruction, lexicon=lexicon)
                for instruction_id, instruction in _read_instructions(args["input_file"])
            }

        missing = [g.instruction_id for g in gold if g.instruction_id not in predicted]
        if missing:
            raise AnnotationError(f"No parser output for gold instructions {', '.join(missing)}")
        report = evaluate_parser([predicted[g.instruction_id] for g in gold], gold)

        with open(run.target, "w") as f:
            json.dump(report._serialize(), f, indent=2, sort_keys=True)
        logger.info(
            f"Configuration accuracy {report.configuration_accuracy:.3f} on {report.configurations} configurations"
        )


@main.command("train")
@run_options
@benchmark_options
@click.option("--epochs", type=click.IntRange(min=1), help="The number of training epochs.")
@click.option("--lr", type=click.FloatRange(min=0.0, min_open=True), help="The ADAM learning rate.")
@click.option("--batch-size", type=click.IntRange(min=1))
@click.option(
    "--variant",
    type=click.Choice(VARIANT_NAMES),
    help="Train one of the ablation variants instead of the configured model.",
)
@click.option("--grounding", type=click.Choice(["state", "soft"]))
@click.option(
    "--resume",
    "resume_from",
    type=click.Path(exists=True, dir_okay=False),
    help="Continue training from a checkpoint.",
)
@handle_errors
def train(**args):
    """Train the navigation agent"""
    benchmark, source = _open_benchmark(args["benchmark"], args["data"])
    train_overrides = _drop_none(
        epochs=args["epochs"], lr=args["lr"], batch_size=args["batch_size"]
    )

    train_state = None
    if args["resume_from"] is not None:
        agent, train_state, train_config = resume(args["resume_from"])
        train_config = train_config.copy(**train_overrides)
        model_config = agent.config
    else:
        model_overrides = _drop_none(grounding=args["grounding"])
        if args["variant"] is not None:
            _, m, l, s = ABLATION_VARIANTS[VARIANT_NAMES.index(args["variant"])]
            model_overrides.update(use_motion=m, use_landmark=l, use_similarity=s)
        model_config, train_config = _run_configs(
            benchmark, args["config_file"], args["seed"], model_overrides, train_overrides
        )
        agent = build_agent(model_config, benchmark.split("train"))

    with Run("train", args, args["out"], METRICS_FILE) as run:
        outputs = [
            run.output("config.json"),
            run.output(METRICS_FILE),
            run.output(CHECKPOINT_FILE),
            run.output(BEST_CHECKPOINT_FILE),
        ]
        config = {"model": model_config._serialize(), "train": train_config._serialize()}
        inputs = [source, args["config_file"], args["resume_from"]]
        run.write_manifest(config, train_config.seed, inputs, outputs)

        save_run_config(run.output("config.json"), model_config, train_config)
        logger.info(f"Training agent with {agent.parameter_count()} parameters")
        train_loop(
            agent,
            benchmark,
            train_config,
            out=run.directory,
            train_state=train_state,
            jobs=args["jobs"],
        )


@main.command("eval")
@run_options
@benchmark_options
@click.option(
    "--checkpoint",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="The checkpoint of the agent to evaluate.",
)
@click.option(
    "--split",
    type=click.Choice(SPLITS),
    multiple=True,
    default=("val_seen", "val_unseen"),
    show_default=True,
    help="The splits to evaluate, can be given multiple times.",
)
@click.option(
    "--threshold",
    type=click.FloatRange(min=0.0),
    default=SUCCESS_THRESHOLD,
    show_default=True,
    help="The success radius in meters.",
)
@handle_errors
def evaluate(**args):
    """Evaluate a trained agent with greedy decoding"""
    from spcnav.agent import load_agent

    benchmark, source = _open_benchmark(args["benchmark"], args["data"])

    with Run("eval", args, args["out"], "results.jsonl") as run:
        summary_file = run.output("summary.json")
        agent, header = load_agent(args["checkpoint"])
        config = {"model": agent.config._serialize(), "train": header.get("train", {})}
        seed = args["seed"] if args["seed"] is not None else agent.config.init_seed
        run.write_manifest(config, seed, [source, args["checkpoint"]], [run.target, summary_file])

        episodes = [e for e in benchmark.episodes if e.split in args["split"]]
        results = run_greedy(
            agent, benchmark, episodes, jobs=args["jobs"], threshold=args["threshold"]
        )
        summary = split_metrics(results, args["threshold"])
        for split, values in summary.items():
            jsonschema.validate(instance=values, schema=load_schema("summary.json"))
            logger.info(f"{split}: SR {values['sr']:.3f}, SPL {values['spl']:.3f}, NE {values['ne']:.2f}")

        save_results(results, run.target)
        with open(summary_file, "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)


@main.command("ablate")
@run_options
@benchmark_options
@click.option(
    "--variant",
    type=click.Choice(VARIANT_NAMES),
    multiple=True,
    help="The variants to train, can be given multiple times. Defaults to all.",
)
@click.option(
    "--repeats",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="The number of consecutive seeds every variant is trained with.",
)
@click.option("--epochs", type=click.IntRange(min=1))
@handle_errors
def ablate(**args):
    """Train and evaluate the ablation variants of the agent"""
    benchmark, source = _open_benchmark(args["benchmark"], args["data"])
    model_config, train_config = _run_configs(
        benchmark, args["config_file"], args["seed"], {}, _drop_none(epochs=args["epochs"])
    )
    variants = [v for v in ABLATION_VARIANTS if not args["variant"] or v[0] in args["variant"]]
    seeds = [train_config.seed + r for r in range(args["repeats"])]

    with Run("ablate", args, args["out"], "ablation.json") as run:
        config = {"model": model_config._serialize(), "train": train_config._serialize()}
        run.write_manifest(config, train_config.seed, [source, args["config_file"]], [run.target])

        rows = run_ablation(
            benchmark, model_config, train_config, seeds=seeds, variants=variants, jobs=args["jobs"]
        )
        with open(run.target, "w") as f:
            json.dump({"benchmark": benchmark.config.name, "rows": rows}, f, indent=2, sort_keys=True)


@main.command("export-attn")
@run_options
@benchmark_options
@click.option(
    "--checkpoint",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="The checkpoint of the agent.",
)
@click.option("--episode", "episode_id", type=str, required=True, help="The episode id.")
@handle_errors
def export_attn(**args):
    """Export the state attention of one greedy rollout as CSV"""
    from spcnav.agent import load_agent, parse_cached

    benchmark, source = _open_benchmark(args["benchmark"], args["data"])
    matches = [e for e in benchmark.episodes if e.episode_id == args["episode_id"]]
    if not matches:
        raise click.BadParameter(f"Unknown episode {args['episode_id']}", param_hint="--episode")
    episode = matches[0]

    with Run("export-attn", args, args["out"], "attention.csv") as run:
        sidecar = os.path.splitext(run.target)[0] + ".json"
        agent, header = load_agent(args["checkpoint"])
        config = {"model": agent.config._serialize(), "train": header.get("train", {})}
        run.write_manifest(
            config, agent.config.init_seed, [source, args["checkpoint"]], [run.target, sidecar]
        )

        result = rollout(agent, benchmark.world_of(episode), episode)
        texts = parse_cached(episode.instruction).configuration_texts()
        export_attention(result, texts, run.target)
        logger.info(f"Exported {result.steps} steps of state attention to {run.target}")


if __name__ == "__main__":
    main()
