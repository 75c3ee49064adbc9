"""
Run Configuration
=================
One TOML file drives every command. Precedence, lowest first:

    built-in defaults  <  config file  <  command-line flags

Validation collects every problem before raising a single ``ConfigError``.
The effective configuration is hashed (first 16 hex digits of SHA-256 over
its sorted-key JSON) and the hash is written, together with the seed, into
every artifact a command produces.
"""

import copy
import hashlib
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

from motenc.errors import ConfigError
from motenc.model import ArchitectureSpec
from motenc.skeleton import HierarchySpec, SkeletonSchema, load_schema
from motenc.synth import ACTIONS
from motenc.training import TrainConfig

log = logging.getLogger(__name__)

DEFAULTS = {
    "seed": 0,
    "output_dir": "outputs",
    "threads": 1,
    "schema": "",
    "architecture": {
        "kind": "S-TE",
        "delta_t": 100,
        "outer_width": 300,
        "bottleneck_width": 100,
        "conv_specs": [[30, 5], [30, 15], [30, 30]],
        "node_widths": [10, 30, 60, 300],
        "init_std": 1.0,
        "nonzeros_per_unit": 15,
    },
    "train": {
        "lr": 0.01,
        "momentum": 0.9,
        "weight_decay": 0.0005,
        "batch_size": 400,
        "epochs": 10,
        "dropout_start": 0.1,
        "dropout_end": 0.3,
        "pretrain": False,
        "pretrain_epochs": 5,
        "finetune_lr_factor": 0.1,
        "decay_biases": False,
        "stride": 1,
    },
    "data": {
        "paths": [],
        "target_fps": 60,
        "normalize": True,
        "test_fraction": 0.25,
        "holdout_subjects": [],
    },
    "eval": {
        "horizons": [80, 160, 320, 560, 1000, 1600],
        "baseline": False,
        "per_action": False,
    },
    "classify": {
        "tap": "middle",
        "window_seconds": 8.0,
        "aggregate": "mean",
        "epochs": 100,
        "lr": 0.01,
        "batch_size": 400,
        "stride": 1,
    },
    "sta": {
        "threshold": 0.8,
        "layer": "lower",
        "units": [0],
    },
    "synth": {
        "actions": ["walk", "wave", "box", "squat", "turn"],
        "duration": 10.0,
        "fps": 60,
        "count": 1,
        "format": "text",
    },
}

SECTIONS = tuple(k for k, v in DEFAULTS.items() if isinstance(v, dict))
_TRAIN_ONLY = ("stride",)


def _type_problem(key, default, value):
    if isinstance(default, bool):
        return None if isinstance(value, bool) else f"{key} must be true or false"
    if isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
        return None if ok else f"{key} must be an integer"
    if isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        return None if ok else f"{key} must be a number"
    if isinstance(default, str):
        return None if isinstance(value, str) else f"{key} must be a string"
    if isinstance(default, list):
        return None if isinstance(value, list) else f"{key} must be a list"
    return None


def _merge(target, source, problems, origin):
    """Copy ``source`` into ``target``, reporting unknown keys and wrong types."""
    for key, value in source.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                problems.append(f"{origin}: [{key}] must be a table")
                continue
            for sub_key, sub_value in value.items():
                name = f"{key}.{sub_key}"
                if sub_key not in DEFAULTS[key]:
                    problems.append(f"{origin}: unknown key {name}")
                    continue
                problem = _type_problem(name, DEFAULTS[key][sub_key], sub_value)
                if problem:
                    problems.append(f"{origin}: {problem}")
                else:
                    target[key][sub_key] = sub_value
        elif key in DEFAULTS:
            problem = _type_problem(key, DEFAULTS[key], value)
            if problem:
                problems.append(f"{origin}: {problem}")
            else:
                target[key] = value
        else:
            problems.append(f"{origin}: unknown key {key}")


@dataclass
class RunConfig:
    """Effective configuration of one command run."""

    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    source: str = None

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self):
        return self.values["seed"]

    @property
    def output_dir(self):
        return Path(self.values["output_dir"])

    @property
    def threads(self):
        return self.values["threads"]

    def to_dict(self):
        return copy.deepcopy(self.values)

    def config_hash(self):
        blob = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def provenance(self):
        return {"seed": self.seed, "config_hash": self.config_hash()}

    def schema(self):
        """Skeleton schema from ``schema`` (path), or the default SMPL schema."""
        path = self.values["schema"]
        if path:
            return load_schema(path)
        return SkeletonSchema()

    def architecture_spec(self, schema=None, kind=None):
        arch = self.values["architecture"]
        schema = schema or self.schema()
        hierarchy = HierarchySpec(
            num_joints=schema.num_joints,
            limbs=schema.hierarchy.limbs,
            groups=schema.hierarchy.groups,
            node_widths=tuple(arch["node_widths"]),
        )
        return ArchitectureSpec(
            kind=kind or arch["kind"],
            delta_t=arch["delta_t"],
            num_joints=schema.num_joints,
            outer_width=arch["outer_width"],
            bottleneck_width=arch["bottleneck_width"],
            conv_specs=tuple(tuple(c) for c in arch["conv_specs"]),
            hierarchy=hierarchy,
            init_std=float(arch["init_std"]),
            nonzeros_per_unit=arch["nonzeros_per_unit"],
        )

    def train_config(self):
        train = {k: v for k, v in self.values["train"].items() if k not in _TRAIN_ONLY}
        return TrainConfig(seed=self.seed, **train)

    def classifier_train_config(self):
        train, classify = self.values["train"], self.values["classify"]
        return TrainConfig(
            lr=classify["lr"],
            momentum=train["momentum"],
            weight_decay=train["weight_decay"],
            batch_size=classify["batch_size"],
            epochs=classify["epochs"],
            dropout_start=0.0,
            dropout_end=0.0,
            seed=self.seed,
            decay_biases=train["decay_biases"],
        )

    def problems(self, require_data=False):
        """Every problem of the effective configuration."""
        found = []
        values = self.values
        if not 0 <= values["seed"] < 2**64:
            found.append("seed must be an unsigned 64-bit integer")
        if values["threads"] < 1:
            found.append("threads must be >= 1")
        if values["schema"] and not Path(values["schema"]).exists():
            found.append(f"schema file does not exist: {values['schema']}")

        arch = values["architecture"]
        try:
            schema = self.schema() if not values["schema"] or Path(values["schema"]).exists() else SkeletonSchema()
            spec = self.architecture_spec(schema)
            if not spec.is_encoder:
                found.append(f"architecture.kind must be ste, cte or hte, got {arch['kind']}")
            found.extend(f"architecture: {p}" for p in spec.problems())
        except ConfigError as e:
            found.extend(f"architecture: {p}" for p in e.problems)
        except (TypeError, ValueError) as e:
            found.append(f"architecture: {e}")
        if any(not isinstance(c, list) or len(c) != 2 for c in arch["conv_specs"]):
            found.append("architecture.conv_specs must be a list of [filters, width] pairs")

        found.extend(f"train: {p}" for p in self.train_config().problems())
        if values["train"]["stride"] < 1:
            found.append("train.stride must be >= 1")
        found.extend(f"classify: {p}" for p in self.classifier_train_config().problems())

        data = values["data"]
        if data["target_fps"] < 1:
            found.append("data.target_fps must be >= 1")
        if not 0.0 < data["test_fraction"] < 1.0:
            found.append("data.test_fraction must lie in (0, 1)")
        if require_data and not data["paths"]:
            found.append("data.paths is empty: give --data or set [data] paths")
        for path in data["paths"]:
            if not Path(path).exists():
                found.append(f"data path does not exist: {path}")

        horizons = values["eval"]["horizons"]
        if not horizons or any(h <= 0 for h in horizons) or sorted(set(horizons)) != list(horizons):
            found.append("eval.horizons must be positive and strictly increasing")

        classify = values["classify"]
        if classify["tap"] not in ("lower", "middle", "upper"):
            found.append("classify.tap must be lower, middle or upper")
        if classify["aggregate"] not in ("mean", "vote"):
            found.append("classify.aggregate must be mean or vote")
        if classify["window_seconds"] <= 0:
            found.append("classify.window_seconds must be positive")
        if classify["stride"] < 1:
            found.append("classify.stride must be >= 1")

        sta = values["sta"]
        if not 0.0 <= sta["threshold"] < 1.0:
            found.append("sta.threshold must lie in [0, 1)")
        if any(not isinstance(u, int) or u < 0 for u in sta["units"]):
            found.append("sta.units must be non-negative integers")

        synth = values["synth"]
        unknown = [a for a in synth["actions"] if a not in ACTIONS]
        if unknown:
            found.append(f"synth.actions has unknown actions {unknown}, expected {list(ACTIONS)}")
        if synth["duration"] <= 0 or synth["fps"] < 1 or synth["count"] < 1:
            found.append("synth.duration, synth.fps and synth.count must be positive")
        if synth["format"] not in ("text", "binary"):
            found.append("synth.format must be text or binary")
        return found

    def validate(self, require_data=False):
        found = self.problems(require_data)
        if found:
            raise ConfigError(found)
        return self


def load_config(path=None, overrides=None, require_data=False):
    """
    Build the effective configuration.

    Args:
        path (str | Path): TOML file, optional
        overrides (dict): Dotted keys ("train.lr") or top-level keys; None values are ignored
        require_data (bool): Demand at least one data path

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigError: Listing every problem found
    """
    values = copy.deepcopy(DEFAULTS)
    problems = []
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file does not exist: {path}")
        try:
            with open(path, "rb") as f:
                _merge(values, tomllib.load(f), problems, str(path))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}")

    nested = {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, sub_key = key.partition(".")
        if sub_key:
            nested.setdefault(section, {})[sub_key] = value
        else:
            nested[section] = value
    _merge(values, nested, problems, "command line")
    if problems:
        raise ConfigError(problems)

    config = RunConfig(values, str(path) if path else None)
    config.validate(require_data)
    return config
