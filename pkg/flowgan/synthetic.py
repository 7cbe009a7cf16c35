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

"""Synthetic ground truth: Markov-chain token oracles and event feeds."""

import dataclasses
from typing import Any, Callable, List, Optional, Sequence, Tuple

import jax
import numpy as np

from flowgan import event_codec, models, simulation
from flowgan.event_codec import Token
from flowgan.order_book import OrderBook, OrderEvent


def mirror_permutation(vocab: event_codec.Vocabulary) -> np.ndarray:
    """perm[i] is the id of token i with bid and ask swapped."""
    perm = np.empty(vocab.size, dtype=np.int64)
    for i in range(vocab.size):
        token = vocab.decode(i)
        perm[i] = vocab.encode(Token(token.kind, token.side.opposite, token.q))
    return perm


@dataclasses.dataclass(frozen=True)
class MarkovChainOracle:
    """First-order Markov chain over token ids.

    Attributes:
      transition: [V, V] row-stochastic matrix, transition[i, j] = P(j | i).
      initial: [V] distribution of the first token.
    """

    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        transition = np.asarray(self.transition, dtype=np.float64)
        initial = np.asarray(self.initial, dtype=np.float64)
        v = len(initial)
        if transition.shape != (v, v):
            raise ValueError(f"transition must be [{v}, {v}], got {transition.shape}")
        if np.any(transition < 0) or not np.allclose(transition.sum(axis=1), 1.0):
            raise ValueError("transition rows must be probability vectors")
        if np.any(initial < 0) or not np.isclose(initial.sum(), 1.0):
            raise ValueError("initial must be a probability vector")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "initial", initial)

    @property
    def vocab_size(self) -> int:
        return len(self.initial)

    @classmethod
    def random(
        cls,
        vocab_size: int,
        seed: int,
        concentration: float = 0.3,
        floor: float = 0.02,
        mirror: Optional[np.ndarray] = None,
    ) -> "MarkovChainOracle":
        """Draws Dirichlet rows mixed with a uniform floor.

        With `mirror` the chain is made invariant under swapping bid and ask,
        so neither side of a book driven by it drifts away systematically.
        """
        rng = np.random.default_rng(seed)
        rows = rng.dirichlet(np.full(vocab_size, concentration), size=vocab_size)
        transition = (1.0 - floor) * rows + floor / vocab_size
        if mirror is not None:
            transition = 0.5 * (transition + transition[np.ix_(mirror, mirror)])
        oracle = cls(transition, np.full(vocab_size, 1.0 / vocab_size))
        return dataclasses.replace(oracle, initial=oracle.stationary())

    def stationary(self) -> np.ndarray:
        eigvals, eigvecs = np.linalg.eig(self.transition.T)
        vec = np.real(eigvecs[:, np.argmin(np.abs(eigvals - 1.0))])
        vec = np.abs(vec)
        return vec / vec.sum()

    def sample(
        self, length: int, rng: np.random.Generator, previous: Optional[int] = None
    ) -> np.ndarray:
        tokens = np.empty(length, dtype=np.int32)
        probs = self.initial if previous is None else self.transition[previous]
        cdf = np.cumsum(self.transition, axis=1)
        uniforms = rng.random(length)
        for t in range(length):
            if t == 0:
                token = int(np.searchsorted(np.cumsum(probs), uniforms[0], side="right"))
            else:
                token = int(np.searchsorted(cdf[tokens[t - 1]], uniforms[t], side="right"))
            tokens[t] = min(token, self.vocab_size - 1)
        return tokens

    def log_likelihood(
        self, sequences: np.ndarray, previous: Optional[Sequence[int]] = None
    ) -> np.ndarray:
        """Log-probability of each row of `sequences` ([B, T] or [T])."""
        seqs = np.atleast_2d(np.asarray(sequences, dtype=np.int64))
        if previous is None:
            first = np.log(self.initial[seqs[:, 0]])
        else:
            prev = np.asarray(previous, dtype=np.int64).reshape(-1)
            first = np.log(self.transition[prev, seqs[:, 0]])
        rest = np.log(self.transition[seqs[:, :-1], seqs[:, 1:]]).sum(axis=1)
        ll = first + rest
        return ll if np.ndim(sequences) > 1 else ll[0]

    def nll(self, sequences: np.ndarray, previous: Optional[Sequence[int]] = None) -> float:
        """Mean sequence negative log-likelihood under the oracle."""
        return float(-np.mean(self.log_likelihood(sequences, previous)))


def oracle_evaluator(
    oracle: MarkovChainOracle,
    model: models.SeqGan,
    starts: np.ndarray,
    length: int,
    key: jax.Array,
) -> Callable[[Any], float]:
    """Returns params -> oracle NLL of sequences the generator samples.

    The same starts and key are used at every call.
    """
    starts = np.asarray(starts, dtype=np.int32)

    def evaluate(gen_params: Any) -> float:
        samples = np.asarray(model.generate(gen_params, starts, length, key))
        return oracle.nll(samples, previous=starts[:, -1])

    return evaluate


def synthesize_events(
    tokens: Sequence[int],
    vocab: event_codec.Vocabulary,
    book: OrderBook,
    rng: np.random.Generator,
    mean_gap: float = 1.0,
    volume_mean_log: float = 0.0,
    volume_sigma: float = 0.5,
    start_time: float = 0.0,
) -> Tuple[List[OrderEvent], simulation.SimCounters]:
    """Materializes a token stream with exponential gaps and log-normal volumes.

    Returns:
      (events, counters); the events start from `book`, which is not modified.
    """
    n = len(tokens)
    times = start_time + np.cumsum(rng.exponential(mean_gap, size=n))
    volumes = rng.lognormal(volume_mean_log, volume_sigma, size=n)
    flow = simulation.materialize(
        tokens,
        book,
        vocab,
        None,
        rng,
        timestamps=times,
        volumes=volumes,
    )
    return flow.events, flow.counters
