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

"""Vocabulary configuration and book-aware encoding of order events."""

import dataclasses
import enum
from typing import Iterable, List, Optional, Sequence, Tuple

import gin
import numpy as np
from absl import logging

from flowgan import errors, event_codec
from flowgan.event_codec import Token, TokenClass
from flowgan.order_book import OrderBook, OrderEvent, OrderKind, Side

# Ten ticks covers most activity near the touch.
DEFAULT_MAX_RELATIVE_PRICE = 10
_VOLUME_TOLERANCE = 1e-9


@gin.configurable
@dataclasses.dataclass(frozen=True)
class VocabularyConfig:
    """Configuration for the token vocabulary."""

    max_relative_price: int = DEFAULT_MAX_RELATIVE_PRICE


def build_vocabulary(vocab_config: VocabularyConfig) -> event_codec.Vocabulary:
    """Build the token vocabulary from configuration.

    Args:
        vocab_config: Vocabulary configuration

    Returns:
        Token vocabulary with 4Q + 4 ids
    """
    return event_codec.Vocabulary(vocab_config.max_relative_price)


class Origin(str, enum.Enum):
    REAL = "real"
    GENERATED = "generated"
    START = "start"


@dataclasses.dataclass(frozen=True)
class FlowSequence:
    """Fixed-length token sequence."""

    tokens: np.ndarray
    origin: Origin = Origin.REAL

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int32)
        if tokens.ndim != 1:
            raise ValueError(f"tokens must be 1-D, got shape {tokens.shape}")
        object.__setattr__(self, "tokens", tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self, vocab: event_codec.Vocabulary, length: Optional[int] = None):
        if length is not None and len(self.tokens) != length:
            raise ValueError(f"expected length {length}, got {len(self.tokens)}")
        if len(self.tokens) and (
            self.tokens.min() < 0 or self.tokens.max() >= vocab.size
        ):
            raise errors.EncodeError(f"token ids must lie in [0, {vocab.size})")
        return self


@dataclasses.dataclass
class EncodeLosses:
    """Events the token alphabet cannot represent exactly.

    Attributes:
      marketable_limits: limit orders at or through the opposite best quote,
        encoded as the market token they execute as.
      resting_residues: marketable limits whose unfilled part rested on the
        book; the market token does not carry that residue.
      residue_volume: total volume of those resting residues.
      out_of_band_limits: limit orders encoded as eta.
      out_of_band_cancels: cancels encoded as eta; materializing eta places a
        limit order, so these do not come back as cancels.
    """

    marketable_limits: int = 0
    resting_residues: int = 0
    residue_volume: float = 0.0
    out_of_band_limits: int = 0
    out_of_band_cancels: int = 0

    def record(self, event: OrderEvent, token: Token, filled: float) -> None:
        if event.kind is OrderKind.LIMIT and token.kind is TokenClass.MARKET:
            self.marketable_limits += 1
            residue = event.volume - filled
            if residue > _VOLUME_TOLERANCE * event.volume:
                self.resting_residues += 1
                self.residue_volume += residue
        elif token.kind is TokenClass.OUT_OF_BAND:
            if event.kind is OrderKind.CANCEL:
                self.out_of_band_cancels += 1
            else:
                self.out_of_band_limits += 1

    @property
    def total(self) -> int:
        return self.resting_residues + self.out_of_band_limits + self.out_of_band_cancels


def _market_token(aggressor: Side) -> Token:
    # A buy executes at the best ask (mu_A), a sell at the best bid (mu_B).
    return Token(TokenClass.MARKET, aggressor.opposite)


def encode_event(
    event: OrderEvent, book: OrderBook, vocab: event_codec.Vocabulary
) -> int:
    """Maps an order event to a token id given the current book.

    Limit and cancel orders are measured in ticks from the opposite best
    quote. Prices more than Q ticks away, and events whose reference side is
    unquoted, map to the out-of-band token of their side. Marketable limit
    orders map to the market token they execute as.

    The mapping is lossy in two places. A marketable limit's residue that
    rests on the book is not represented by its market token. An out-of-band
    cancel shares the eta token with out-of-band limits, and eta materializes
    as a limit order. `encode_flow` counts both in `EncodeLosses`.

    Raises:
      EncodeError: if the event is malformed.
    """
    if not isinstance(event, OrderEvent):
        raise errors.EncodeError(f"expected an OrderEvent, got {type(event).__name__}")
    if event.kind is OrderKind.MARKET:
        return vocab.encode(_market_token(event.side))
    if event.kind not in (OrderKind.LIMIT, OrderKind.CANCEL):
        raise errors.EncodeError(f"unknown order kind {event.kind!r}")

    out_of_band = vocab.encode(Token(TokenClass.OUT_OF_BAND, event.side))
    if book.is_empty(event.side.opposite):
        return out_of_band
    q = book.relative_price(event.side, event.price_ticks)
    if q < 1:
        if event.kind is OrderKind.LIMIT:
            return vocab.encode(_market_token(event.side))
        return out_of_band
    if q > vocab.max_relative_price:
        return out_of_band
    kind = TokenClass.LIMIT if event.kind is OrderKind.LIMIT else TokenClass.CANCEL
    return vocab.encode(Token(kind, event.side, q))


def decode_token(token_id: int, vocab: event_codec.Vocabulary) -> Token:
    return vocab.decode(token_id)


def encode_flow(
    events: Iterable[OrderEvent],
    book: OrderBook,
    vocab: event_codec.Vocabulary,
    losses: Optional[EncodeLosses] = None,
) -> Tuple[np.ndarray, OrderBook]:
    """Encodes a stream while advancing a copy of the book with it.

    Args:
      events: order events in time order.
      book: book before the first event; not modified.
      vocab: token vocabulary.
      losses: if given, updated with the events the tokens do not represent
        exactly.

    Returns:
      (token ids as int32 array, book after the last event)
    """
    book = book.copy()
    tokens: List[int] = []
    unfilled = 0
    for event in events:
        token_id = encode_event(event, book, vocab)
        tokens.append(token_id)
        try:
            fills = book.apply(event)
        except errors.UnfilledMarketError as e:
            unfilled += 1
            fills = e.fills
        if losses is not None:
            losses.record(event, vocab.decode(token_id), sum(f.volume for f in fills))
    if unfilled:
        logging.warning("%d market orders exhausted the book while encoding", unfilled)
    return np.asarray(tokens, dtype=np.int32), book


def token_counts(tokens: Sequence[int], vocab: event_codec.Vocabulary) -> np.ndarray:
    return np.bincount(np.asarray(tokens, dtype=np.int64), minlength=vocab.size)
