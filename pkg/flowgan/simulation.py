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

"""Materialization of token flows, replay and mid-price path simulation."""

import concurrent.futures
import csv
import dataclasses
import functools
import math
import multiprocessing
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import gin
import jax
import numpy as np
from absl import logging

from flowgan import errors, event_codec, models, poisson
from flowgan.event_codec import Token, TokenClass
from flowgan.network import ModelConfig
from flowgan.order_book import OrderBook, OrderEvent, OrderKind, Side
from flowgan.preprocessors import EmpiricalSampler

DEFAULT_INTERVAL = 60.0
DEFAULT_HORIZON = 48 * 3600.0
ETA_POLICIES = ("materialize", "drop")


@gin.configurable
@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Simulation configuration.

    Attributes:
      horizon: simulated seconds per path.
      path_count: number of independent paths.
      interval: sampling interval of the mid-price series in seconds.
      eta_policy: "materialize" places out-of-band tokens as limit orders Q+1
        ticks from the opposite best quote; "drop" discards them.
      num_workers: processes used for paths; 1 runs in-process.
      seed: master seed; path i derives its own streams from (seed, i).
      start_time: clock value at the start of every path.
    """

    horizon: float = DEFAULT_HORIZON
    path_count: int = 100
    interval: float = DEFAULT_INTERVAL
    eta_policy: str = "materialize"
    num_workers: int = 1
    seed: int = 0
    start_time: float = 0.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise errors.ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.path_count < 1:
            raise errors.ConfigError(f"path_count must be >= 1, got {self.path_count}")
        if not self.interval > 0:
            raise errors.ConfigError(f"interval must be positive, got {self.interval}")
        if self.eta_policy not in ETA_POLICIES:
            raise errors.ConfigError(
                f"eta_policy must be one of {ETA_POLICIES}, got {self.eta_policy!r}"
            )
        if self.num_workers < 1:
            raise errors.ConfigError(f"num_workers must be >= 1, got {self.num_workers}")

    @property
    def num_intervals(self) -> int:
        return num_intervals(self.horizon, self.interval)


def num_intervals(horizon: float, interval: float) -> int:
    return int(math.ceil(horizon / interval))


@dataclasses.dataclass
class SimCounters:
    """Per-path diagnostics reported alongside every series."""

    events: int = 0
    skipped_events: int = 0
    dropped_out_of_band: int = 0
    phantom_cancels: int = 0
    unfilled_markets: int = 0
    held_mids: int = 0

    def merge(self, other: "SimCounters") -> "SimCounters":
        return SimCounters(
            **{
                f.name: getattr(self, f.name) + getattr(other, f.name)
                for f in dataclasses.fields(self)
            }
        )

    def to_dict(self) -> Dict[str, int]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class MidPriceSeries:
    """Mid-price sampled at the end of each interval.

    values[k] is the mid at start_time + interval * (k + 1) and
    trade_counts[k] the number of market orders in that interval.
    """

    values: np.ndarray
    interval: float = DEFAULT_INTERVAL
    start_time: float = 0.0
    trade_counts: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError(f"values must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("mid-prices must be finite and positive")
        counts = self.trade_counts
        counts = (
            np.zeros(len(values), np.int64)
            if counts is None
            else np.asarray(counts, dtype=np.int64)
        )
        if counts.shape != values.shape:
            raise ValueError("trade_counts must align with values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "trade_counts", counts)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.interval * np.arange(1, len(self.values) + 1)

    def head(self, horizon: float) -> "MidPriceSeries":
        """The first ceil(horizon / interval) samples."""
        n = num_intervals(horizon, self.interval)
        if n > len(self.values):
            raise errors.ConfigError(
                f"series covers {len(self.values) * self.interval} s, need {horizon} s"
            )
        return MidPriceSeries(
            self.values[:n], self.interval, self.start_time, self.trade_counts[:n]
        )

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["time", "mid", "trades"])
            for t, v, c in zip(self.times, self.values, self.trade_counts):
                writer.writerow([repr(float(t)), repr(float(v)), int(c)])

    @classmethod
    def from_csv(cls, path: str) -> "MidPriceSeries":
        if not os.path.exists(path):
            raise errors.ConfigError(f"series file {path} does not exist")
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        if len(rows) < 1:
            raise errors.ParseError("empty series file", path)
        try:
            times = np.asarray([float(r["time"]) for r in rows])
            values = np.asarray([float(r["mid"]) for r in rows])
            counts = np.asarray([int(r.get("trades") or 0) for r in rows])
        except (KeyError, ValueError) as e:
            raise errors.ParseError(f"malformed series: {e!r}", path) from e
        interval = float(times[1] - times[0]) if len(times) > 1 else DEFAULT_INTERVAL
        return cls(values, interval, float(times[0] - interval), counts)


# Materialization.


@dataclasses.dataclass
class MaterializedFlow:
    events: List[OrderEvent]
    counters: SimCounters
    book: OrderBook
    end_time: float


def _price_for(token: Token, book: OrderBook, q: int) -> int:
    """Inverts the relative price against the current opposite best quote."""
    if token.side is Side.BID:
        return book.best_ask() - q
    return book.best_bid() + q


def _event_for_token(
    token: Token,
    book: OrderBook,
    volume: float,
    timestamp: float,
    eta_policy: str,
    max_relative_price: int,
) -> Tuple[Optional[OrderEvent], str]:
    """Builds the order a token stands for, or (None, reason)."""
    if token.kind is TokenClass.MARKET:
        # The token side is the side executed against.
        if book.is_empty(token.side):
            return None, "skipped"
        return OrderEvent(OrderKind.MARKET, token.side.opposite, volume, timestamp), ""
    if token.kind is TokenClass.OUT_OF_BAND:
        if eta_policy == "drop":
            return None, "dropped"
        kind, q = OrderKind.LIMIT, max_relative_price + 1
    else:
        kind = OrderKind.LIMIT if token.kind is TokenClass.LIMIT else OrderKind.CANCEL
        q = token.q
    if book.is_empty(token.side.opposite):
        return None, "skipped"
    return OrderEvent(kind, token.side, volume, timestamp, _price_for(token, book, q)), ""


def materialize(
    tokens: Sequence[int],
    book: OrderBook,
    vocab: event_codec.Vocabulary,
    volume_sampler: Optional[EmpiricalSampler],
    rng: np.random.Generator,
    time_sampler: Optional[EmpiricalSampler] = None,
    timestamps: Optional[Sequence[float]] = None,
    volumes: Optional[Sequence[float]] = None,
    start_time: float = 0.0,
    eta_policy: str = "materialize",
) -> MaterializedFlow:
    """Turns tokens into priced, sized and timed order events.

    Each token is decoded against the book as it stands after the previous
    events, so the events are applied to a working copy as they are built.

    Eta tokens become limit orders Q+1 ticks from the opposite best quote (or
    are dropped under eta_policy "drop"), whatever event they were encoded
    from; an out-of-band cancel therefore comes back as a limit order. Market
    tokens become market orders, so the resting residue of a marketable limit
    encoded as one is not restored.

    Args:
      tokens: token ids.
      book: book the flow starts from; not modified.
      vocab: token vocabulary.
      volume_sampler: volume distribution; unused when `volumes` is given.
      rng: numpy generator. Per token the gap is drawn before the volume.
      time_sampler: inter-arrival distribution (generated flows).
      timestamps: explicit event times (Poisson flows, replayed real flows).
        Exactly one of `time_sampler` and `timestamps` must be given.
      volumes: explicit volumes aligned with `tokens`.
      start_time: clock value before the first event.
      eta_policy: one of ETA_POLICIES.

    Returns:
      MaterializedFlow with the events, counters, the book after the flow
      and the clock after the last token.
    """
    if (time_sampler is None) == (timestamps is None):
        raise errors.ConfigError("give exactly one of time_sampler and timestamps")
    if volumes is None and volume_sampler is None:
        raise errors.ConfigError("give a volume sampler or explicit volumes")
    if eta_policy not in ETA_POLICIES:
        raise errors.ConfigError(f"unknown eta_policy {eta_policy!r}")
    tokens = np.asarray(tokens, dtype=np.int64)
    if timestamps is not None and len(timestamps) != len(tokens):
        raise ValueError("timestamps must align with tokens")
    if volumes is not None and len(volumes) != len(tokens):
        raise ValueError("volumes must align with tokens")

    book = book.copy()
    phantom_before = book.phantom_cancels
    counters = SimCounters()
    events: List[OrderEvent] = []
    clock = start_time
    for i, token_id in enumerate(tokens):
        if timestamps is not None:
            clock = float(timestamps[i])
        else:
            clock += float(time_sampler.sample(rng))
        volume = float(volumes[i]) if volumes is not None else float(
            volume_sampler.sample(rng)
        )
        token = vocab.decode(int(token_id))
        event, reason = _event_for_token(
            token, book, volume, clock, eta_policy, vocab.max_relative_price
        )
        if event is None:
            if reason == "dropped":
                counters.dropped_out_of_band += 1
            else:
                counters.skipped_events += 1
            continue
        try:
            book.apply(event)
        except errors.UnfilledMarketError:
            counters.unfilled_markets += 1
        events.append(event)
    counters.events = len(events)
    counters.phantom_cancels = book.phantom_cancels - phantom_before
    if counters.skipped_events:
        logging.warning("skipped %d tokens against an unquoted side", counters.skipped_events)
    return MaterializedFlow(events=events, counters=counters, book=book, end_time=clock)


# Replay.


@dataclasses.dataclass
class MidTrajectory:
    """Mid-price after every event; index 0 is the initial book."""

    times: np.ndarray
    mids: np.ndarray
    trade_times: np.ndarray


@dataclasses.dataclass
class ReplayResult:
    trajectory: MidTrajectory
    book: OrderBook
    counters: SimCounters


def _mid_or_nan(book: OrderBook) -> float:
    return book.mid_price() if book.has_quotes() else math.nan


def replay(events: Sequence[OrderEvent], book: OrderBook) -> ReplayResult:
    """Applies events to a copy of `book`, recording the mid after each.

    While a side is empty the last valid mid is held and counted.
    """
    book = book.copy()
    phantom_before = book.phantom_cancels
    counters = SimCounters()
    times = [-math.inf]
    mids = [_mid_or_nan(book)]
    trade_times = []
    last_valid = mids[0]
    for event in events:
        try:
            book.apply(event)
        except errors.UnfilledMarketError:
            counters.unfilled_markets += 1
        if event.kind is OrderKind.MARKET:
            trade_times.append(event.timestamp)
        if book.has_quotes():
            last_valid = book.mid_price()
        elif not math.isnan(last_valid):
            counters.held_mids += 1
        times.append(event.timestamp)
        mids.append(last_valid)
    counters.events = len(events)
    counters.phantom_cancels = book.phantom_cancels - phantom_before
    if counters.held_mids:
        logging.warning("held the last mid for %d events", counters.held_mids)
    return ReplayResult(
        trajectory=MidTrajectory(
            times=np.asarray(times, dtype=np.float64),
            mids=np.asarray(mids, dtype=np.float64),
            trade_times=np.asarray(trade_times, dtype=np.float64),
        ),
        book=book,
        counters=counters,
    )


def resample(
    trajectory: MidTrajectory,
    interval: float = DEFAULT_INTERVAL,
    horizon: float = DEFAULT_HORIZON,
    start_time: float = 0.0,
) -> MidPriceSeries:
    """Last observation carried forward at each interval boundary.

    An event exactly on a boundary belongs to the interval it closes; trades
    stamped exactly at `start_time` count toward the first interval.

    Raises:
      NoQuoteError: if no valid mid exists at some boundary.
    """
    boundaries = start_time + interval * np.arange(1, num_intervals(horizon, interval) + 1)
    idx = np.searchsorted(trajectory.times, boundaries, side="right") - 1
    values = trajectory.mids[idx]
    if np.any(np.isnan(values)):
        raise errors.NoQuoteError("no two-sided book before a sampling boundary")
    lower = np.searchsorted(trajectory.trade_times, start_time, side="left")
    upper = np.searchsorted(trajectory.trade_times, boundaries, side="right")
    counts = np.diff(np.concatenate([[lower], upper]))
    return MidPriceSeries(values, interval, start_time, counts)


# Generators.


def chain_generate(
    model: models.SeqGan,
    gen_params: Any,
    start,
    windows: int,
    length: int,
    key: jax.Array,
) -> np.ndarray:
    """Generates `windows` consecutive windows of `length` tokens.

    Window k uses fold_in(key, k) and is conditioned on window k - 1 (the
    start sequence for k = 0).
    """
    if windows < 0:
        raise ValueError(f"windows must be >= 0, got {windows}")
    out = []
    current = np.asarray(start, dtype=np.int32)
    for k in range(windows):
        current = np.asarray(
            model.generate(gen_params, current, length, jax.random.fold_in(key, k))
        )
        out.append(current)
    if not out:
        return np.zeros(0, dtype=np.int32)
    return np.concatenate(out).astype(np.int32)


@dataclasses.dataclass
class PathResult:
    series: MidPriceSeries
    counters: SimCounters
    seed: Tuple[int, int]


def _path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path_index,)))


def _finish_path(
    events: Sequence[OrderEvent],
    initial_book: OrderBook,
    counters: SimCounters,
    config: SimConfig,
    path_index: int,
) -> PathResult:
    result = replay(events, initial_book)
    counters = dataclasses.replace(
        counters,
        held_mids=result.counters.held_mids,
    )
    series = resample(result.trajectory, config.interval, config.horizon, config.start_time)
    return PathResult(series=series, counters=counters, seed=(config.seed, path_index))


@dataclasses.dataclass
class PoissonFlowModel:
    """Multiple-Poisson flow with empirical volumes."""

    rates: poisson.PoissonRates
    vocab: event_codec.Vocabulary
    volume_sampler: EmpiricalSampler

    def sample_path(
        self, config: SimConfig, path_index: int, initial_book: OrderBook
    ) -> PathResult:
        rng = _path_rng(config.seed, path_index)
        tokens, times = poisson.sample_flow(
            self.rates, config.horizon, rng, start_time=config.start_time
        )
        flow = materialize(
            tokens,
            initial_book,
            self.vocab,
            self.volume_sampler,
            rng,
            timestamps=times,
            eta_policy=config.eta_policy,
        )
        return _finish_path(flow.events, initial_book, flow.counters, config, path_index)


@dataclasses.dataclass
class SeqGanFlowModel:
    """Generator flow with empirical volumes and inter-arrival times.

    Windows are chained until the sampled clock passes the horizon.
    """

    model_config: ModelConfig
    gen_params: Any
    starts: np.ndarray
    seq_len: int
    vocab: event_codec.Vocabulary
    volume_sampler: EmpiricalSampler
    time_sampler: EmpiricalSampler

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.int32)
        if self.starts.ndim != 2 or not len(self.starts):
            raise errors.ConfigError("need a non-empty [num_starts, S] start array")

    @functools.cached_property
    def model(self) -> models.SeqGan:
        return models.SeqGan(self.model_config)

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("model", None)
        state["gen_params"] = jax.device_get(self.gen_params)
        return state

    def sample_path(
        self, config: SimConfig, path_index: int, initial_book: OrderBook
    ) -> PathResult:
        rng = _path_rng(config.seed, path_index)
        key = jax.random.fold_in(jax.random.PRNGKey(config.seed), path_index)
        current = self.starts[rng.integers(len(self.starts))]
        book = initial_book
        clock = config.start_time
        end = config.start_time + config.horizon
        events: List[OrderEvent] = []
        counters = SimCounters()
        window = 0
        while clock < end:
            current = np.asarray(
                self.model.generate(
                    self.gen_params, current, self.seq_len, jax.random.fold_in(key, window)
                )
            )
            flow = materialize(
                current,
                book,
                self.vocab,
                self.volume_sampler,
                rng,
                time_sampler=self.time_sampler,
                start_time=clock,
                eta_policy=config.eta_policy,
            )
            events.extend(e for e in flow.events if e.timestamp < end)
            counters = counters.merge(flow.counters)
            book, clock = flow.book, flow.end_time
            window += 1
        logging.debug("path %d: %d windows, %d events", path_index, window, len(events))
        return _finish_path(events, initial_book, counters, config, path_index)


FlowModel = Union[PoissonFlowModel, SeqGanFlowModel]


def _sample_path(
    flow_model: FlowModel, config: SimConfig, snapshot: Mapping[str, Any], path_index: int
) -> PathResult:
    return flow_model.sample_path(config, path_index, OrderBook.from_snapshot(snapshot))


def run_paths(
    flow_model: FlowModel, config: SimConfig, initial_book: OrderBook
) -> List[PathResult]:
    """Simulates `config.path_count` independent paths.

    Path i draws from numpy SeedSequence(seed, spawn_key=(i,)) and, for the
    generator, jax fold_in(PRNGKey(seed), i), so a path does not depend on
    how many paths run or on the worker count. Results are in path order.
    """
    if not initial_book.has_quotes():
        raise errors.NoQuoteError("the initial book must be two-sided")
    snapshot = initial_book.snapshot()
    indices = range(config.path_count)
    if config.num_workers == 1:
        results = [_sample_path(flow_model, config, snapshot, i) for i in indices]
    else:
        context = multiprocessing.get_context("spawn")
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=config.num_workers, mp_context=context
        ) as executor:
            results = list(
                executor.map(
                    functools.partial(_sample_path, flow_model, config, snapshot),
                    indices,
                )
            )
    total = functools.reduce(SimCounters.merge, (r.counters for r in results))
    logging.info("simulated %d paths: %s", len(results), total.to_dict())
    return results
