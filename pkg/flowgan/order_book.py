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

"""Price-time priority limit order book.

Prices are integer ticks inside the book; conversion to currency happens only
at the I/O boundary (`to_ticks` / `to_price`). Each price level is a FIFO queue
of [order_id, remaining_volume] entries; empty levels are removed.
"""

import collections
import copy
import dataclasses
import enum
from typing import Any, Deque, Dict, List, Mapping, Optional

from absl import logging
from sortedcontainers import SortedDict

from flowgan import errors


class Side(str, enum.Enum):
    """Book side. For orders, BID means buy and ASK means sell."""

    BID = "bid"
    ASK = "ask"

    @property
    def opposite(self) -> "Side":
        return Side.ASK if self is Side.BID else Side.BID


class OrderKind(str, enum.Enum):
    LIMIT = "limit"
    MARKET = "market"
    CANCEL = "cancel"


@dataclasses.dataclass(frozen=True)
class OrderEvent:
    """A single order event.

    Attributes:
      kind: limit, market or cancel.
      side: side of the order. For market orders this is the aggressor side, so
        a BID market order is a buy that executes against the asks.
      volume: order size, strictly positive.
      timestamp: seconds since epoch.
      price_ticks: limit / cancel price in ticks; None for market orders.
    """

    kind: OrderKind
    side: Side
    volume: float
    timestamp: float = 0.0
    price_ticks: Optional[int] = None

    def __post_init__(self):
        if not self.volume > 0:
            raise errors.RejectedEventError(
                f"volume must be positive, got {self.volume}"
            )
        if self.kind is OrderKind.MARKET:
            if self.price_ticks is not None:
                raise errors.RejectedEventError("market orders carry no price")
        elif self.price_ticks is None:
            raise errors.RejectedEventError(f"{self.kind.value} orders need a price")


@dataclasses.dataclass(frozen=True)
class Fill:
    """One execution between a resting (maker) and incoming (taker) order."""

    maker_id: int
    taker_id: int
    maker_side: Side
    price_ticks: int
    volume: float
    seq: int


@dataclasses.dataclass
class SideLedger:
    """Volume accounting for orders submitted on one side.

    submitted == filled + resting + cancelled + residue holds at all times,
    where resting is the current depth of the side.
    """

    submitted: float = 0.0
    filled: float = 0.0
    cancelled: float = 0.0
    residue: float = 0.0


def to_ticks(price: float, tick_size: float) -> int:
    return int(round(price / tick_size))


def to_price(price_ticks: float, tick_size: float) -> float:
    return price_ticks * tick_size


class OrderBook:
    """Two price ladders with price-time priority matching.

    Cancels carry no order identity, so they remove volume from the tail of
    the level queue (youngest orders first). Cancels at absent levels are
    no-ops counted in `phantom_cancels`.
    """

    def __init__(self, tick_size: float = 0.01):
        if not tick_size > 0:
            raise errors.ConfigError(f"tick_size must be positive, got {tick_size}")
        self.tick_size = tick_size
        self.next_seq = 0
        self.phantom_cancels = 0
        self._levels: Dict[Side, SortedDict] = {
            Side.BID: SortedDict(),
            Side.ASK: SortedDict(),
        }
        self.ledger: Dict[Side, SideLedger] = {
            Side.BID: SideLedger(),
            Side.ASK: SideLedger(),
        }

    # Quotes.

    def is_empty(self, side: Side) -> bool:
        return not self._levels[side]

    def best_bid(self) -> int:
        if not self._levels[Side.BID]:
            raise errors.NoQuoteError("bid side is empty")
        return self._levels[Side.BID].peekitem(-1)[0]

    def best_ask(self) -> int:
        if not self._levels[Side.ASK]:
            raise errors.NoQuoteError("ask side is empty")
        return self._levels[Side.ASK].peekitem(0)[0]

    def best(self, side: Side) -> int:
        return self.best_bid() if side is Side.BID else self.best_ask()

    def has_quotes(self) -> bool:
        return bool(self._levels[Side.BID]) and bool(self._levels[Side.ASK])

    def mid_ticks(self) -> float:
        return (self.best_ask() + self.best_bid()) / 2.0

    def mid_price(self) -> float:
        """Returns (a(t) + b(t)) / 2 in currency units."""
        return to_price(self.mid_ticks(), self.tick_size)

    def relative_price(self, side: Side, price_ticks: int) -> int:
        """Distance in ticks from the opposite best quote.

        Buy prices are measured from the best ask, sell prices from the best
        bid. The result is >= 1 for every non-crossing price.
        """
        if side is Side.BID:
            return self.best_ask() - price_ticks
        return price_ticks - self.best_bid()

    def depth(self, side: Side) -> Dict[int, float]:
        return {
            price: sum(entry[1] for entry in queue)
            for price, queue in self._levels[side].items()
        }

    def level_volume(self, side: Side, price_ticks: int) -> float:
        queue = self._levels[side].get(price_ticks)
        return sum(entry[1] for entry in queue) if queue else 0.0

    def total_volume(self, side: Side) -> float:
        return sum(self.depth(side).values())

    def queue(self, side: Side, price_ticks: int) -> List[List[Any]]:
        """Copy of the FIFO queue at a level, oldest first."""
        return [list(entry) for entry in self._levels[side].get(price_ticks, ())]

    # Events.

    def apply(self, event: OrderEvent) -> List[Fill]:
        if event.kind is OrderKind.LIMIT:
            return self.apply_limit(event.side, event.price_ticks, event.volume)
        if event.kind is OrderKind.MARKET:
            return self.apply_market(event.side, event.volume)
        self.apply_cancel(event.side, event.price_ticks, event.volume)
        return []

    def apply_limit(
        self,
        side: Side,
        price_ticks: int,
        volume: float,
        order_id: Optional[int] = None,
    ) -> List[Fill]:
        """Submits a limit order; crossing volume matches, the residue rests.

        Args:
          side: BID for a buy, ASK for a sell.
          price_ticks: limit price in ticks.
          volume: order size.
          order_id: optional explicit id; defaults to the next sequence number.

        Returns:
          Fills in execution order.

        Raises:
          RejectedEventError: if volume is not positive.
        """
        self._check_volume(volume)
        taker_id = self._next_id(order_id)
        self.ledger[side].submitted += volume
        fills: List[Fill] = []
        remaining = volume
        while remaining > 0 and self._crosses(side, price_ticks):
            remaining = self._match_best(side, taker_id, remaining, fills)
        if remaining > 0:
            levels = self._levels[side]
            if price_ticks not in levels:
                levels[price_ticks] = collections.deque()
            levels[price_ticks].append([taker_id, remaining])
        return fills

    def apply_market(self, side: Side, volume: float) -> List[Fill]:
        """Submits a market order that walks the opposite side from its best.

        Raises:
          RejectedEventError: if volume is not positive.
          UnfilledMarketError: if the opposite side runs dry. The fills that
            happened are applied and attached to the error.
        """
        self._check_volume(volume)
        taker_id = self._next_id(None)
        self.ledger[side].submitted += volume
        fills: List[Fill] = []
        remaining = volume
        while remaining > 0 and self._levels[side.opposite]:
            remaining = self._match_best(side, taker_id, remaining, fills)
        if remaining > 0:
            self.ledger[side].residue += remaining
            raise errors.UnfilledMarketError(remaining, fills)
        return fills

    def apply_cancel(self, side: Side, price_ticks: int, volume: float) -> float:
        """Removes up to `volume` from the tail of a level.

        Returns:
          The volume actually removed; 0.0 for a phantom cancel.
        """
        self._check_volume(volume)
        levels = self._levels[side]
        queue = levels.get(price_ticks)
        if queue is None:
            self.phantom_cancels += 1
            logging.debug("phantom cancel at %s %d", side.value, price_ticks)
            return 0.0
        remaining = volume
        while remaining > 0 and queue:
            entry = queue[-1]
            taken = min(remaining, entry[1])
            entry[1] -= taken
            remaining -= taken
            if entry[1] <= 0:
                queue.pop()
        if not queue:
            del levels[price_ticks]
        removed = volume - remaining
        self.ledger[side].cancelled += removed
        return removed

    # Internals.

    @staticmethod
    def _check_volume(volume: float) -> None:
        if not volume > 0:
            raise errors.RejectedEventError(f"volume must be positive, got {volume}")

    def _next_id(self, order_id: Optional[int]) -> int:
        self.next_seq += 1
        return self.next_seq if order_id is None else order_id

    def _crosses(self, side: Side, price_ticks: int) -> bool:
        opposite = self._levels[side.opposite]
        if not opposite:
            return False
        if side is Side.BID:
            return price_ticks >= opposite.peekitem(0)[0]
        return price_ticks <= opposite.peekitem(-1)[0]

    def _match_best(
        self, side: Side, taker_id: int, remaining: float, fills: List[Fill]
    ) -> float:
        maker_side = side.opposite
        levels = self._levels[maker_side]
        price, queue = levels.peekitem(0 if side is Side.BID else -1)
        while remaining > 0 and queue:
            entry = queue[0]
            traded = min(remaining, entry[1])
            entry[1] -= traded
            remaining -= traded
            self.ledger[side].filled += traded
            self.ledger[maker_side].filled += traded
            fills.append(
                Fill(
                    maker_id=entry[0],
                    taker_id=taker_id,
                    maker_side=maker_side,
                    price_ticks=price,
                    volume=traded,
                    seq=self.next_seq,
                )
            )
            if entry[1] <= 0:
                queue.popleft()
        if not queue:
            del levels[price]
        return remaining

    # Persistence.

    def copy(self) -> "OrderBook":
        return copy.deepcopy(self)

    def snapshot(self) -> Dict[str, Any]:
        """JSON-serializable resting state (ledgers are not included)."""
        return {
            "tick_size": self.tick_size,
            "next_seq": self.next_seq,
            "bids": [[p, [list(e) for e in q]] for p, q in self._levels[Side.BID].items()],
            "asks": [[p, [list(e) for e in q]] for p, q in self._levels[Side.ASK].items()],
        }

    @classmethod
    def from_snapshot(cls, snapshot: Mapping[str, Any]) -> "OrderBook":
        book = cls(tick_size=float(snapshot["tick_size"]))
        book.next_seq = int(snapshot["next_seq"])
        for side, key in ((Side.BID, "bids"), (Side.ASK, "asks")):
            for price, entries in snapshot[key]:
                queue: Deque[List[Any]] = collections.deque(
                    [int(oid), float(vol)] for oid, vol in entries
                )
                if queue:
                    book._levels[side][int(price)] = queue
                    book.ledger[side].submitted += sum(e[1] for e in queue)
        return book

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OrderBook):
            return NotImplemented
        return self.snapshot() == other.snapshot()


def synthetic_book(
    levels: int, depth: float, mid_ticks: int, tick_size: float = 0.01
) -> OrderBook:
    """Symmetric book with `levels` price levels per side of equal depth.

    The best quotes sit one tick either side of `mid_ticks`.
    """
    if levels < 1:
        raise errors.ConfigError(f"levels must be >= 1, got {levels}")
    book = OrderBook(tick_size=tick_size)
    for i in range(levels):
        book.apply_limit(Side.BID, mid_ticks - 1 - i, depth)
        book.apply_limit(Side.ASK, mid_ticks + 1 + i, depth)
    return book
