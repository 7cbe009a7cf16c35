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

"""Multiple-Poisson order-flow benchmark.

One homogeneous Poisson process per token, fitted by maximum likelihood and
sampled into a single time-sorted flow.
"""

import dataclasses
import json
from typing import Any, Mapping, Optional, Sequence, Tuple

import numpy as np
from absl import logging

from flowgan import errors, event_codec


@dataclasses.dataclass(frozen=True)
class PoissonRates:
    """Per-token arrival rates in events per second."""

    rates: np.ndarray
    fitted_duration: float

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=np.float64)
        if rates.ndim != 1:
            raise ValueError(f"rates must be 1-D, got shape {rates.shape}")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ValueError("rates must be finite and non-negative")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    def __len__(self) -> int:
        return len(self.rates)

    def to_json(
        self, vocab: event_codec.Vocabulary, extra: Optional[Mapping[str, Any]] = None
    ) -> str:
        """Rates keyed by token name; `extra` keys (e.g. a config hash) are added."""
        if len(self.rates) != vocab.size:
            raise ValueError(
                f"{len(self.rates)} rates for a vocabulary of size {vocab.size}"
            )
        return json.dumps(
            {
                **dict(extra or {}),
                "fitted_duration": self.fitted_duration,
                "vocabulary": vocab.to_dict(),
                "rates": {
                    vocab.token_name(i): float(r) for i, r in enumerate(self.rates)
                },
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> Tuple["PoissonRates", event_codec.Vocabulary]:
        d = json.loads(text)
        vocab = event_codec.Vocabulary.from_dict(d["vocabulary"])
        rates = np.zeros(vocab.size)
        for name, rate in d["rates"].items():
            rates[vocab.token_id(name)] = rate
        return cls(rates, float(d["fitted_duration"])), vocab


def fit_rates(tokens: Sequence[int], duration: float, vocab_size: int) -> PoissonRates:
    """Maximum-likelihood rates: lambda_k = count(k) / duration.

    Raises:
      ConfigError: if duration is not positive.
    """
    if not duration > 0:
        raise errors.ConfigError(f"duration must be positive, got {duration}")
    counts = np.bincount(np.asarray(tokens, dtype=np.int64), minlength=vocab_size)
    if len(counts) > vocab_size:
        raise errors.EncodeError(f"token id >= vocabulary size {vocab_size}")
    rates = PoissonRates(counts / duration, float(duration))
    logging.info(
        "fitted %d Poisson rates over %.1f s, total rate %.4f/s",
        vocab_size,
        duration,
        rates.total_rate,
    )
    return rates


def _arrival_times(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Arrival times in [0, horizon) from cumulated exponential gaps."""
    expected = rate * horizon
    chunk = int(expected + 5 * np.sqrt(expected) + 16)
    times = []
    clock = 0.0
    while True:
        arrivals = clock + np.cumsum(rng.exponential(1.0 / rate, size=chunk))
        inside = arrivals[arrivals < horizon]
        times.append(inside)
        if len(inside) < chunk:
            break
        clock = arrivals[-1]
    return np.concatenate(times)


def sample_flow(
    rates: PoissonRates,
    horizon: float,
    rng: np.random.Generator,
    start_time: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Samples every process over [0, horizon) and merges them by time.

    Args:
      rates: fitted rates.
      horizon: length of the sampled period in seconds.
      rng: numpy generator; processes draw from it in token-id order.
      start_time: offset added to every timestamp.

    Returns:
      (token ids, timestamps) sorted by time, ties broken by token id.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    token_chunks = []
    time_chunks = []
    if horizon > 0:
        for token, rate in enumerate(rates.rates):
            if rate <= 0:
                continue
            times = _arrival_times(float(rate), horizon, rng)
            token_chunks.append(np.full(len(times), token, dtype=np.int32))
            time_chunks.append(times)
    if not token_chunks:
        return np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.float64)
    tokens = np.concatenate(token_chunks)
    times = np.concatenate(time_chunks)
    order = np.lexsort((tokens, times))
    return tokens[order], times[order] + start_time
