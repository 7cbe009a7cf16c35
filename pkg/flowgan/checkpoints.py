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

"""Versioned msgpack checkpoints of the generator and discriminator states."""

import os
from typing import Any, Dict, Tuple

from absl import logging
from flax import serialization
from flax.training import train_state

from flowgan import errors

CHECKPOINT_VERSION = 1


def checkpoint_path(directory: str, round_index: int) -> str:
    return os.path.join(directory, f"round_{round_index:05d}.msgpack")


def save_checkpoint(
    path: str,
    gen_state: train_state.TrainState,
    disc_state: train_state.TrainState,
    round_index: int,
    seed: int,
) -> None:
    """Writes both train states (params, optimizer state, step) atomically."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "round": round_index,
        "seed": seed,
        "generator": serialization.to_state_dict(gen_state),
        "discriminator": serialization.to_state_dict(disc_state),
    }
    tmp_path = path + ".tmp"
    with open(tmp_path, "wb") as f:
        f.write(serialization.msgpack_serialize(payload))
    os.replace(tmp_path, path)
    logging.info("wrote checkpoint %s (round %d)", path, round_index)


def load_checkpoint(
    path: str,
    gen_template: train_state.TrainState,
    disc_template: train_state.TrainState,
) -> Tuple[train_state.TrainState, train_state.TrainState, Dict[str, Any]]:
    """Restores train states into templates of matching structure.

    Returns:
      (generator state, discriminator state, {"round": ..., "seed": ...})

    Raises:
      ConfigError: if the file is missing.
      ParseError: if the file is unreadable or of another version.
    """
    if not os.path.exists(path):
        raise errors.ConfigError(f"checkpoint {path} does not exist")
    with open(path, "rb") as f:
        raw = f.read()
    try:
        payload = serialization.msgpack_restore(raw)
    except Exception as e:  # msgpack raises several unrelated types
        raise errors.ParseError(f"unreadable checkpoint: {e!r}", path) from e
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise errors.ParseError(
            f"checkpoint version {version}, expected {CHECKPOINT_VERSION}", path
        )
    try:
        gen_state = serialization.from_state_dict(gen_template, payload["generator"])
        disc_state = serialization.from_state_dict(
            disc_template, payload["discriminator"]
        )
    except (KeyError, ValueError) as e:
        raise errors.ParseError(f"checkpoint does not match the model: {e!r}", path) from e
    return gen_state, disc_state, {"round": int(payload["round"]), "seed": int(payload["seed"])}


def latest_checkpoint(directory: str) -> str:
    if not os.path.isdir(directory):
        raise errors.ConfigError(f"no checkpoint directory {directory}")
    names = sorted(
        n for n in os.listdir(directory) if n.startswith("round_") and n.endswith(".msgpack")
    )
    if not names:
        raise errors.ConfigError(f"no checkpoints in {directory}")
    return os.path.join(directory, names[-1])
