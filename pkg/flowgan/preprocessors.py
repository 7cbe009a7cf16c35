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

"""Training-pair slicing, empirical samplers and the token cache."""

import dataclasses
import hashlib
import json
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from absl import logging

from flowgan import errors, event_codec
from flowgan.order_book import OrderEvent
from flowgan.vocabularies import FlowSequence, Origin

DEFAULT_SLICE_LEN = 400

CACHE_FILENAME = "tokens.npz"
SAMPLERS_FILENAME = "samplers.json"


@dataclasses.dataclass(frozen=True)
class TrainingPair:
    """A start sequence and the real continuation that follows it."""

    start: FlowSequence
    real: FlowSequence

    def __post_init__(self):
        if len(self.start) != len(self.real):
            raise ValueError(
                f"start and real lengths differ: {len(self.start)} != {len(self.real)}"
            )

    @property
    def seq_len(self) -> int:
        return len(self.real)


def slice_flow(
    tokens: Sequence[int], slice_len: int = DEFAULT_SLICE_LEN
) -> List[TrainingPair]:
    """Cuts a token stream into consecutive non-overlapping training pairs.

    Each slice is split in half: the first half is the start sequence and the
    second the real sequence. A trailing partial slice is dropped.

    Args:
      tokens: token ids in stream order.
      slice_len: even slice length.

    Returns:
      Training pairs in stream order.
    """
    if slice_len < 2 or slice_len % 2:
        raise ValueError(f"slice_len must be even and >= 2, got {slice_len}")
    tokens = np.asarray(tokens, dtype=np.int32)
    half = slice_len // 2
    num_slices = len(tokens) // slice_len
    pairs = []
    for i in range(num_slices):
        chunk = tokens[i * slice_len : (i + 1) * slice_len]
        pairs.append(
            TrainingPair(
                start=FlowSequence(chunk[:half], Origin.START),
                real=FlowSequence(chunk[half:], Origin.REAL),
            )
        )
    dropped = len(tokens) - num_slices * slice_len
    if dropped:
        logging.info("dropped %d trailing tokens after slicing", dropped)
    return pairs


def pairs_to_arrays(pairs: Sequence[TrainingPair]) -> Tuple[np.ndarray, np.ndarray]:
    """Stacks pairs into (starts, reals), each of shape [num_pairs, T]."""
    if not pairs:
        raise ValueError("no training pairs")
    starts = np.stack([p.start.tokens for p in pairs]).astype(np.int32)
    reals = np.stack([p.real.tokens for p in pairs]).astype(np.int32)
    return starts, reals


def arrays_to_pairs(starts: np.ndarray, reals: np.ndarray) -> List[TrainingPair]:
    return [
        TrainingPair(FlowSequence(s, Origin.START), FlowSequence(r, Origin.REAL))
        for s, r in zip(starts, reals)
    ]


@dataclasses.dataclass(frozen=True)
class EmpiricalSampler:
    """Inverse-CDF sampler over observed values.

    Draws are uniform over the stored sample, so only observed values are
    ever returned.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.sort(np.asarray(self.values, dtype=np.float64))
        if values.size == 0:
            raise errors.SamplerError("cannot fit a sampler to an empty sample")
        if not np.all(np.isfinite(values)) or values[0] <= 0:
            raise errors.SamplerError("sampler values must be finite and positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def inverse_cdf(self, u):
        """Maps uniforms in [0, 1) to sample values."""
        idx = np.minimum(
            np.floor(np.asarray(u) * len(self.values)).astype(np.int64),
            len(self.values) - 1,
        )
        return self.values[idx]

    def sample(self, rng: np.random.Generator, size=None):
        return self.inverse_cdf(rng.random(size))

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    def to_dict(self) -> Dict[str, Any]:
        return {"values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EmpiricalSampler":
        return cls(np.asarray(d["values"], dtype=np.float64))


def fit_empirical(values: Sequence[float]) -> EmpiricalSampler:
    return EmpiricalSampler(np.asarray(values, dtype=np.float64))


def sample(sampler: EmpiricalSampler, rng: np.random.Generator) -> float:
    return float(sampler.sample(rng))


def inter_arrival_times(timestamps: Sequence[float]) -> np.ndarray:
    """Gaps between consecutive events, one per pair.

    Simultaneous events produce zero gaps, which the sampler cannot hold;
    each is replaced by the smallest positive gap so that the number of gaps,
    and with it the simulated event rate, is kept.

    Raises:
      SamplerError: if no gap is positive.
    """
    gaps = np.diff(np.asarray(timestamps, dtype=np.float64))
    zero = gaps <= 0
    if np.any(zero):
        if np.all(zero):
            raise errors.SamplerError("all events share one timestamp")
        floor = float(gaps[~zero].min())
        gaps = np.where(zero, floor, gaps)
        logging.info(
            "set %d zero inter-arrival gaps of %d to %g", int(zero.sum()), len(gaps), floor
        )
    return gaps


def fit_samplers(
    events: Sequence[OrderEvent],
) -> Tuple[EmpiricalSampler, EmpiricalSampler]:
    """Fits the pooled volume and inter-arrival samplers.

    Returns:
      (volume_sampler, time_sampler)
    """
    if len(events) < 2:
        raise errors.SamplerError(f"need at least 2 events, got {len(events)}")
    volumes = fit_empirical([e.volume for e in events])
    gaps = fit_empirical(inter_arrival_times([e.timestamp for e in events]))
    return volumes, gaps


def save_samplers(
    path: str, volume_sampler: EmpiricalSampler, time_sampler: EmpiricalSampler
) -> None:
    with open(path, "w") as f:
        json.dump(
            {"volume": volume_sampler.to_dict(), "inter_arrival": time_sampler.to_dict()},
            f,
            sort_keys=True,
        )


def load_samplers(path: str) -> Tuple[EmpiricalSampler, EmpiricalSampler]:
    if not os.path.exists(path):
        raise errors.ConfigError(f"samplers file {path} does not exist")
    try:
        with open(path) as f:
            d = json.load(f)
        return (
            EmpiricalSampler.from_dict(d["volume"]),
            EmpiricalSampler.from_dict(d["inter_arrival"]),
        )
    except (json.JSONDecodeError, KeyError) as e:
        raise errors.ParseError(f"unreadable samplers file: {e!r}", path) from e


@dataclasses.dataclass
class TokenCache:
    """Encoded training flow and its slicing.

    Attributes:
      tokens: training token ids in stream order.
      timestamps: event times aligned with `tokens`.
      volumes: event volumes aligned with `tokens`.
      slice_len: slice length used to cut training pairs.
    """

    tokens: np.ndarray
    timestamps: np.ndarray
    volumes: np.ndarray
    slice_len: int = DEFAULT_SLICE_LEN

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int32)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.volumes = np.asarray(self.volumes, dtype=np.float64)
        if not len(self.tokens) == len(self.timestamps) == len(self.volumes):
            raise ValueError("tokens, timestamps and volumes must align")

    @property
    def duration(self) -> float:
        if len(self.timestamps) < 2:
            return 0.0
        return float(self.timestamps[-1] - self.timestamps[0])

    def pairs(self) -> List[TrainingPair]:
        return slice_flow(self.tokens, self.slice_len)

    def content_hash(self) -> str:
        """SHA-256 over the cached arrays; stable across rewrites."""
        digest = hashlib.sha256()
        for array in (self.tokens, self.timestamps, self.volumes):
            digest.update(np.ascontiguousarray(array).tobytes())
        digest.update(str(self.slice_len).encode())
        return digest.hexdigest()

    def save(self, path: str) -> str:
        with open(path, "wb") as f:
            np.savez(
                f,
                tokens=self.tokens,
                timestamps=self.timestamps,
                volumes=self.volumes,
                slice_len=np.asarray(self.slice_len),
            )
        return self.content_hash()

    @classmethod
    def load(cls, path: str) -> "TokenCache":
        if not os.path.exists(path):
            raise errors.ConfigError(f"token cache {path} does not exist; run ingest")
        try:
            with np.load(path) as data:
                return cls(
                    tokens=data["tokens"],
                    timestamps=data["timestamps"],
                    volumes=data["volumes"],
                    slice_len=int(data["slice_len"]),
                )
        except (OSError, KeyError, ValueError) as e:
            raise errors.ParseError(f"unreadable token cache: {e!r}", path) from e


def build_cache(
    events: Sequence[OrderEvent],
    tokens: Sequence[int],
    slice_len: int = DEFAULT_SLICE_LEN,
    vocab: Optional[event_codec.Vocabulary] = None,
) -> TokenCache:
    cache = TokenCache(
        tokens=np.asarray(tokens, dtype=np.int32),
        timestamps=np.asarray([e.timestamp for e in events], dtype=np.float64),
        volumes=np.asarray([e.volume for e in events], dtype=np.float64),
        slice_len=slice_len,
    )
    if vocab is not None and len(cache.tokens) and cache.tokens.max() >= vocab.size:
        raise errors.EncodeError("token id outside the vocabulary")
    return cache
