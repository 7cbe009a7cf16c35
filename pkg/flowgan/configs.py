# Copyright 2024 The FlowGAN Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Run configuration: file loading, precedence and hashing.

Precedence, lowest first: dataclass defaults, gin bindings, the run file,
explicit overrides (command-line flags).
"""

import dataclasses
import datetime
import hashlib
import json
import os
import sys
from typing import Any, Dict, Mapping, Optional, Tuple

import jax.numpy as jnp
import numpy as np

from flowgan import errors, metrics, network, training, vocabularies
from flowgan.datasets import FEED_FORMATS, FeedConfig, TimeWindow, parse_time
from flowgan.simulation import SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # Python 3.10: same parser, pre-stdlib distribution.
    import tomli as tomllib

_SECTIONS = {
    "vocab": vocabularies.VocabularyConfig,
    "model": network.ModelConfig,
    "train": training.TrainConfig,
    "simulation": SimConfig,
    "stats": metrics.StatsConfig,
}
_SCALARS = ("feeds", "feed_format", "tick_size", "slice_len", "seed", "run_root")
_WINDOWS = ("train_window", "test_window")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on."""

    feeds: Tuple[str, ...] = ()
    feed_format: str = "ndjson"
    tick_size: float = 0.01
    train_window: Optional[TimeWindow] = None
    test_window: Optional[TimeWindow] = None
    vocab: vocabularies.VocabularyConfig = dataclasses.field(
        default_factory=vocabularies.VocabularyConfig
    )
    slice_len: int = 400
    model: network.ModelConfig = dataclasses.field(default_factory=network.ModelConfig)
    train: training.TrainConfig = dataclasses.field(default_factory=training.TrainConfig)
    simulation: SimConfig = dataclasses.field(default_factory=SimConfig)
    stats: metrics.StatsConfig = dataclasses.field(default_factory=metrics.StatsConfig)
    seed: int = 0
    run_root: str = "runs"

    def __post_init__(self):
        object.__setattr__(self, "feeds", tuple(self.feeds))
        if self.feed_format not in FEED_FORMATS:
            raise errors.ConfigError(f"unknown feed format {self.feed_format!r}")
        if not self.tick_size > 0:
            raise errors.ConfigError(f"tick_size must be positive, got {self.tick_size}")
        if self.slice_len < 2 or self.slice_len % 2:
            raise errors.ConfigError(f"slice_len must be even, got {self.slice_len}")
        if self.train.seq_len != self.slice_len // 2:
            raise errors.ConfigError(
                f"train.seq_len ({self.train.seq_len}) must be half of slice_len "
                f"({self.slice_len})"
            )
        vocab_size = 4 * self.vocab.max_relative_price + 4
        if self.model.vocab_size != vocab_size:
            raise errors.ConfigError(
                f"model.vocab_size ({self.model.vocab_size}) must be 4Q+4 = {vocab_size}"
            )
        if (
            self.train_window is not None
            and self.test_window is not None
            and self.train_window.overlaps(self.test_window)
        ):
            raise errors.ConfigError("train and test windows overlap")

    @property
    def feed_config(self) -> FeedConfig:
        return FeedConfig(self.feeds, self.feed_format, self.tick_size)

    def check_feeds_exist(self) -> None:
        if not self.feeds:
            raise errors.ConfigError("no feed files configured")
        missing = [p for p in self.feeds if not os.path.exists(p)]
        if missing:
            raise errors.ConfigError(f"feed files do not exist: {missing}")

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {k: getattr(self, k) for k in _SCALARS}
        d["feeds"] = list(self.feeds)
        for name in _WINDOWS:
            window = getattr(self, name)
            d[name] = None if window is None else dataclasses.asdict(window)
        for name in _SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            for key, value in section.items():
                if isinstance(value, tuple):
                    section[key] = list(value)
            if name == "model":
                section["dtype"] = np.dtype(section["dtype"]).name
            d[name] = section
        return d


# Settings that may differ between stages of one run; stage manifests record them.
RUN_SETTINGS = (
    ("seed",),
    ("train", "seed"),
    ("simulation", "seed"),
    ("simulation", "path_count"),
    ("simulation", "horizon"),
    ("simulation", "num_workers"),
)


def run_settings(config: RunConfig) -> Dict[str, Any]:
    """Seed and simulate-time settings, keyed as "section.field"."""
    d = config.to_dict()
    settings = {}
    for path in RUN_SETTINGS:
        value = d
        for key in path:
            value = value[key]
        settings[".".join(path)] = value
    return settings


def config_hash(config: RunConfig) -> str:
    """First 12 hex digits of SHA-256 over the canonical JSON.

    The run root and RUN_SETTINGS are left out, so `ingest` without a seed
    and a later `train --seed=1` or `simulate --path_count=5` resolve the same
    run directory.
    """
    d = config.to_dict()
    d.pop("run_root")
    for path in RUN_SETTINGS:
        section = d
        for key in path[:-1]:
            section = section[key]
        section.pop(path[-1])
    canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _window(value: Any, name: str) -> Optional[TimeWindow]:
    if value is None:
        return None
    if not isinstance(value, Mapping) or set(value) != {"start", "end"}:
        raise errors.ConfigError(f"{name} needs exactly 'start' and 'end'")

    def seconds(v):
        if isinstance(v, datetime.datetime):
            if v.tzinfo is None:
                v = v.replace(tzinfo=datetime.timezone.utc)
            return v.timestamp()
        return parse_time(v)

    try:
        return TimeWindow(seconds(value["start"]), seconds(value["end"]))
    except ValueError as e:
        raise errors.ConfigError(f"bad {name}: {e}") from e


def _section(cls, values: Mapping[str, Any], name: str):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - fields
    if unknown:
        raise errors.ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    values = dict(values)
    if name == "model" and "dtype" in values:
        values["dtype"] = jnp.dtype(values["dtype"])
    try:
        # Calling the gin-configurable class applies gin bindings first.
        base = cls()
        return dataclasses.replace(base, **values)
    except (TypeError, ValueError) as e:
        raise errors.ConfigError(f"bad [{name}] section: {e}") from e


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise errors.ConfigError(f"config file {path} does not exist")
    with open(path, "rb") as f:
        raw = f.read()
    try:
        if path.endswith(".json"):
            return json.loads(raw)
        return tomllib.loads(raw.decode())
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise errors.ConfigError(f"unreadable config {path}: {e}") from e


def build_config(
    values: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    base_dir: Optional[str] = None,
) -> RunConfig:
    """Resolves a RunConfig.

    Args:
      values: parsed run file contents.
      overrides: flag values; keys are top-level names ("seed", "run_root")
        or "section.field" (e.g. "simulation.path_count"). None values are
        ignored.
      base_dir: directory relative feed paths are resolved against.

    Returns:
      The resolved config. The master seed is copied into the train and
      simulation sections.
    """
    values = dict(values or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, field = key.split(".", 1)
            values.setdefault(section, {})
            values[section] = {**values[section], field: value}
        else:
            values[key] = value
    unknown = set(values) - set(_SCALARS) - set(_WINDOWS) - set(_SECTIONS)
    if unknown:
        raise errors.ConfigError(f"unknown config keys: {sorted(unknown)}")

    kwargs: Dict[str, Any] = {k: values[k] for k in _SCALARS if k in values}
    if "feeds" in kwargs:
        feeds = kwargs["feeds"]
        if isinstance(feeds, str):
            feeds = [feeds]
        if base_dir is not None:
            feeds = [p if os.path.isabs(p) else os.path.join(base_dir, p) for p in feeds]
        kwargs["feeds"] = tuple(feeds)
    for name in _WINDOWS:
        kwargs[name] = _window(values.get(name), name)
    sections = {
        name: _section(cls, values.get(name, {}), name) for name, cls in _SECTIONS.items()
    }
    seed = int(kwargs.get("seed", 0))
    sections["train"] = dataclasses.replace(sections["train"], seed=seed)
    sections["simulation"] = dataclasses.replace(sections["simulation"], seed=seed)
    if "model" not in values or "vocab_size" not in values.get("model", {}):
        q = sections["vocab"].max_relative_price
        sections["model"] = dataclasses.replace(sections["model"], vocab_size=4 * q + 4)
    if "train" not in values or "seq_len" not in values.get("train", {}):
        slice_len = int(kwargs.get("slice_len", RunConfig.slice_len))
        sections["train"] = dataclasses.replace(
            sections["train"], seq_len=max(slice_len // 2, 1)
        )
    return RunConfig(**kwargs, **sections)


def load_run_config(
    path: Optional[str], overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    if path is None:
        return build_config({}, overrides)
    return build_config(
        read_config_file(path), overrides, base_dir=os.path.dirname(os.path.abspath(path))
    )
