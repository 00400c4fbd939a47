from spcnav.paths import load_schema, locate_file, check_file_extension
from spcnav.utils import SpcNavError
from spcnav.versioning import stamp, upgrade_document

import copy
import json
import jsonmerge
import jsonschema
import pyrsistent


class ConfigError(SpcNavError):
    pass


def schema_defaults(schema):
    """Extract the default values of all top-level properties of a schema"""
    return {
        key: copy.deepcopy(prop["default"])
        for key, prop in schema.get("properties", {}).items()
        if "default" in prop
    }


class Config:
    def __init__(self, **config):
        """The base class for the validated configuration objects of spcnav

        Unspecified values are taken from the defaults of the JSON schema of
        the configuration class. The configuration is validated on construction
        and stored as an immutable mapping, values are accessible as attributes.

        :param config:
            The dictionary of configuration values that conforms to the schema
            defined by the schema method.
        :type config: dict
        """
        self.config = config

    # A registry of configuration classes by identifier
    _config_impls = {}

    def __init_subclass__(cls, identifier=None, schema_file=None):
        if identifier is None:
            raise ConfigError("Please specify identifier when inheriting from Config")
        if identifier in Config._config_impls:
            raise ConfigError(f"Config identifier {identifier} already taken")
        Config._config_impls[identifier] = cls
        cls._identifier = identifier
        cls._schema_file = schema_file

    @classmethod
    def schema(cls):
        """The JSON schema that this configuration conforms to"""
        return copy.deepcopy(load_schema(cls._schema_file))

    @property
    def config(self):
        """The configuration dictionary

        :type: pyrsistent.PMap
        """
        return self._config

    @config.setter
    def config(self, _config):
        schema = self.schema()

        # Materialize the defaults below the given values
        merger = jsonmerge.Merger({"mergeStrategy": "objectMerge"})
        merged = merger.merge(schema_defaults(schema), pyrsistent.thaw(_config))

        try:
            jsonschema.validate(instance=merged, schema=schema)
        except jsonschema.ValidationError as e:
            raise ConfigError(f"Invalid {self._identifier} configuration: {e.message}")

        self._config = pyrsistent.freeze(merged)
        self._validate()

    def _validate(self):
        """Hook for cross-field validation in subclasses"""
        pass

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)
        try:
            return self._config[name]
        except KeyError:
            raise AttributeError(
                f"{type(self).__name__} has no configuration value '{name}'"
            )

    def copy(self, **kwargs):
        """Create a copy of this configuration with updated values

        :param kwargs:
            A number of key/value pairs that should be changed on the newly
            created instance.
        :type kwargs: dict
        """
        return type(self)(**pyrsistent.thaw(self.config.update(kwargs)))

    def _serialize(self):
        return pyrsistent.thaw(self.config)

    def __repr__(self):
        return f"{type(self).__name__}(**{pyrsistent.thaw(self.config)})"

    def __eq__(self, other):
        return type(self) == type(other) and self.config == other.config

    def __hash__(self):
        return hash((type(self), self.config))


class ModelConfig(Config, identifier="model", schema_file="model_config.json"):
    """Dimensions, capacities and ablation switches of the navigation agent"""

    def _validate(self):
        if self.role_dim != self.object_dim:
            raise ConfigError(
                f"Landmark embeddings share the object label space: role_dim ({self.role_dim}) must equal object_dim ({self.object_dim})"
            )

    @property
    def landmark_dim(self):
        return self.object_dim

    @property
    def enriched_dim(self):
        """Dimension of the enriched configuration representation"""
        dim = self.hidden_dim
        if self.use_motion:
            dim += self.role_dim
        if self.use_landmark:
            dim += self.landmark_dim
        return dim


class TrainConfig(Config, identifier="train", schema_file="train_config.json"):
    """Hyperparameters of the training loop"""

    def teacher_probability(self, epoch):
        """The probability of a teacher-forced rollout in the given (0-based) epoch

        The schedule decreases linearly from :code:`teacher_start` in the first
        epoch to :code:`teacher_end` in the last epoch.
        """
        if self.epochs == 1:
            return self.teacher_start
        frac = min(max(epoch / (self.epochs - 1), 0.0), 1.0)
        return self.teacher_start + frac * (self.teacher_end - self.teacher_start)


class BenchmarkConfig(Config, identifier="benchmark", schema_file="benchmark.json"):
    """Sizes and seeds of a procedurally generated benchmark"""

    def _validate(self):
        if self.min_path > self.max_path:
            raise ConfigError("Benchmark min_path must not exceed max_path")
        if self.val_seen_per_world >= self.episodes_per_world:
            raise ConfigError(
                "Benchmark needs at least one training episode per seen world"
            )


def load_run_config(filename=None, model_overrides={}, train_overrides={}, base=None):
    """Load the model and training configuration

    Values are resolved with the following precedence: schema defaults,
    the given base values (e.g. those of a benchmark specification), the
    versioned JSON configuration file (if given), the given overrides.

    :param filename:
        An optional configuration file written by :func:`save_run_config`.
    :type filename: str
    :param base:
        An optional dictionary with :code:`model` and :code:`train` values
    :type base: dict
    :returns:
        A tuple of :class:`ModelConfig` and :class:`TrainConfig`
    """
    data = {"model": {}, "train": {}}
    if filename is not None:
        with open(locate_file(filename), "r") as f:
            raw = json.load(f)
        jsonschema.validate(instance=raw, schema=load_schema("run_config.json"))
        data = upgrade_document(raw, "config")

    base = pyrsistent.thaw(base) if base is not None else {}
    merger = jsonmerge.Merger({"mergeStrategy": "objectMerge"})
    model, train = base.get("model", {}), base.get("train", {})
    for layer_model, layer_train in (
        (data.get("model", {}), data.get("train", {})),
        (dict(model_overrides), dict(train_overrides)),
    ):
        model = merger.merge(model, layer_model)
        train = merger.merge(train, layer_train)
    return ModelConfig(**model), TrainConfig(**train)


def save_run_config(filename, model_config, train_config):
    """Write a versioned configuration file with all defaults materialized"""
    filename = check_file_extension(filename, [".json"], ".json")
    data = stamp(
        {"model": model_config._serialize(), "train": train_config._serialize()}
    )
    with open(filename, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
    return filename
