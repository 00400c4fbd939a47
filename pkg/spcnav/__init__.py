# This is the single source of truth
__version__ = "0.1.0"

# Ensure inclusion of the logging configuration
import spcnav.logger

# Import those functions and objects that we consider the package user API
from spcnav.agent import SpcNavAgent, load_agent
from spcnav.config import (
    BenchmarkConfig,
    ModelConfig,
    TrainConfig,
    load_run_config,
    save_run_config,
)
from spcnav.evaluation import export_attention, metrics, rollout, run_ablation, run_greedy
from spcnav.parse import (
    evaluate_parser,
    load_annotations,
    load_lexicon,
    load_parsed_corpus,
    parse_instruction,
)
from spcnav.paths import set_data_directory
from spcnav.train import build_agent, resume, train_loop
from spcnav.world import (
    build_benchmark,
    generate_episode,
    generate_world,
    load_benchmark,
    load_world,
    observe,
)


def print_version():
    """Print the current version of spcnav"""
    print(__version__)


# This is necessary for autodoc to generate the User API
# The order of objects in this list defines the order in
# the Sphinx documentation.
__all__ = [
    "parse_instruction",
    "load_parsed_corpus",
    "load_lexicon",
    "load_annotations",
    "evaluate_parser",
    "generate_world",
    "generate_episode",
    "build_benchmark",
    "load_benchmark",
    "load_world",
    "observe",
    "ModelConfig",
    "TrainConfig",
    "BenchmarkConfig",
    "load_run_config",
    "save_run_config",
    "SpcNavAgent",
    "load_agent",
    "build_agent",
    "train_loop",
    "resume",
    "rollout",
    "run_greedy",
    "metrics",
    "run_ablation",
    "export_attention",
    "set_data_directory",
    "print_version",
]
