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

"""Feed configurations and order-event feed parsers.

The canonical feed is NDJSON with one event per line:

  {"time": 1509753600.25, "type": "limit", "side": "bid", "price": 7391.2, "size": 0.5}

`type` is one of limit / market / cancel and `side` one of bid / ask. Market
orders carry the aggressor side and no price. A CSV variant uses the same
column names. Raw Coinbase full-channel messages are mapped by an adapter.
"""

import csv
import dataclasses
import datetime
import heapq
import json
import os
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence

from absl import logging

from flowgan import errors
from flowgan.order_book import OrderEvent, OrderKind, Side, to_price, to_ticks

FEED_FORMATS = ("ndjson", "csv", "coinbase")

_SIDES = {"bid": Side.BID, "ask": Side.ASK, "buy": Side.BID, "sell": Side.ASK}
_KINDS = {k.value: k for k in OrderKind}


@dataclasses.dataclass(frozen=True)
class TimeWindow:
    """Half-open [start, end) interval in seconds since epoch."""

    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise errors.ConfigError(
                f"window end ({self.end}) must be after start ({self.start})"
            )

    def __contains__(self, timestamp: float) -> bool:
        return self.start <= timestamp < self.end

    @property
    def duration(self) -> float:
        return self.end - self.start

    def overlaps(self, other: "TimeWindow") -> bool:
        return self.start < other.end and other.start < self.end


@dataclasses.dataclass(frozen=True)
class FeedConfig:
    """Configuration for a set of feed files."""

    # feed files; merged by timestamp
    paths: Sequence[str]
    # one of FEED_FORMATS
    format: str = "ndjson"
    # currency units per tick
    tick_size: float = 0.01

    def __post_init__(self):
        if self.format not in FEED_FORMATS:
            raise errors.ConfigError(
                f"unknown feed format {self.format!r}; expected one of {FEED_FORMATS}"
            )


def parse_time(value: Any) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value)
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = datetime.datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=datetime.timezone.utc)
    return parsed.timestamp()


def _event_from_record(record: Mapping[str, Any], tick_size: float) -> OrderEvent:
    kind = _KINDS[str(record["type"]).lower()]
    side = _SIDES[str(record["side"]).lower()]
    price = record.get("price")
    price_ticks = None
    if kind is not OrderKind.MARKET:
        if price in (None, ""):
            raise ValueError(f"{kind.value} event without a price")
        price_ticks = to_ticks(float(price), tick_size)
    return OrderEvent(
        kind=kind,
        side=side,
        volume=float(record["size"]),
        timestamp=parse_time(record["time"]),
        price_ticks=price_ticks,
    )


def _coinbase_events(message: Mapping[str, Any], tick_size: float) -> List[OrderEvent]:
    """Maps one raw Coinbase message to zero or more order events."""
    msg_type = message.get("type")
    if msg_type in ("received", "activate", None):
        return []
    timestamp = parse_time(message["time"])
    side = _SIDES[message["side"]]
    if msg_type == "open":
        return [
            OrderEvent(
                OrderKind.LIMIT,
                side,
                float(message["remaining_size"]),
                timestamp,
                to_ticks(float(message["price"]), tick_size),
            )
        ]
    if msg_type == "match":
        # `side` is the maker's side; the aggressor traded against it.
        return [OrderEvent(OrderKind.MARKET, side.opposite, float(message["size"]), timestamp)]
    if msg_type == "done":
        remaining = float(message.get("remaining_size") or 0.0)
        if message.get("reason") != "canceled" or message.get("price") is None:
            return []
        if remaining <= 0:
            return []
        return [
            OrderEvent(
                OrderKind.CANCEL,
                side,
                remaining,
                timestamp,
                to_ticks(float(message["price"]), tick_size),
            )
        ]
    if msg_type == "change":
        if message.get("price") is None:
            return []
        old_price = to_ticks(float(message["price"]), tick_size)
        new_price = old_price
        if message.get("new_price") is not None:
            new_price = to_ticks(float(message["new_price"]), tick_size)
        old_size = float(message.get("old_size") or 0.0)
        new_size = float(message.get("new_size") or 0.0)
        events = []
        if old_size > 0:
            events.append(OrderEvent(OrderKind.CANCEL, side, old_size, timestamp, old_price))
        if new_size > 0:
            events.append(OrderEvent(OrderKind.LIMIT, side, new_size, timestamp, new_price))
        return events
    raise ValueError(f"unknown message type {msg_type!r}")


def _records(path: str, fmt: str) -> Iterator[tuple]:
    with open(path, newline="") as f:
        if fmt == "csv":
            reader = csv.DictReader(f)
            for row in reader:
                yield reader.line_num, row
            return
        for line_num, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield line_num, json.loads(line)
            except json.JSONDecodeError as e:
                raise errors.ParseError(f"invalid JSON: {e.msg}", path, line_num) from e


def parse_feed(
    path: str, fmt: str = "ndjson", tick_size: float = 0.01
) -> Iterator[OrderEvent]:
    """Streams order events from a feed file.

    Args:
      path: feed file.
      fmt: one of FEED_FORMATS.
      tick_size: currency units per tick used to convert prices.

    Yields:
      OrderEvents in non-decreasing time order.

    Raises:
      ParseError: on a malformed line or a timestamp regression, with the
        line number.
    """
    if fmt not in FEED_FORMATS:
        raise errors.ConfigError(f"unknown feed format {fmt!r}")
    if not os.path.exists(path):
        raise errors.ConfigError(f"feed file {path} does not exist")
    last_time = float("-inf")
    for line_num, record in _records(path, fmt):
        try:
            if fmt == "coinbase":
                events = _coinbase_events(record, tick_size)
            else:
                events = [_event_from_record(record, tick_size)]
        except (KeyError, ValueError, TypeError) as e:
            raise errors.ParseError(f"malformed record: {e!r}", path, line_num) from e
        for event in events:
            if event.timestamp < last_time:
                raise errors.ParseError(
                    f"time regression {event.timestamp} < {last_time}", path, line_num
                )
            last_time = event.timestamp
            yield event


def merge_feeds(streams: Sequence[Iterable[OrderEvent]]) -> Iterator[OrderEvent]:
    """Merges time-ordered streams; ties keep the order of `streams`."""
    return heapq.merge(*streams, key=lambda e: e.timestamp)


def load_events(
    feed_config: FeedConfig, window: Optional[TimeWindow] = None
) -> List[OrderEvent]:
    streams = [
        parse_feed(p, feed_config.format, feed_config.tick_size)
        for p in feed_config.paths
    ]
    events = [
        e for e in merge_feeds(streams) if window is None or e.timestamp in window
    ]
    logging.info("loaded %d events from %d feed files", len(events), len(streams))
    return events


def event_to_record(event: OrderEvent, tick_size: float) -> Dict[str, Any]:
    return {
        "time": event.timestamp,
        "type": event.kind.value,
        "side": event.side.value,
        "price": (
            None
            if event.price_ticks is None
            else round(to_price(event.price_ticks, tick_size), 10)
        ),
        "size": event.volume,
    }


def write_ndjson(events: Iterable[OrderEvent], path: str, tick_size: float) -> None:
    with open(path, "w") as f:
        for event in events:
            f.write(json.dumps(event_to_record(event, tick_size), sort_keys=True))
            f.write("\n")
