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

"""Event codec for order-flow tokens.

Token ids are laid out as contiguous ranges, one per (class, side):

  [l_B,1..Q | l_A,1..Q | c_B,1..Q | c_A,1..Q | mu_B | mu_A | eta_B | eta_A]

mu_B is a market order executing at the best bid (a sell) and mu_A one
executing at the best ask (a buy).
"""

import dataclasses
import enum
from typing import Any, Dict, List, Optional, Tuple

from immutabledict import immutabledict

from flowgan import errors
from flowgan.order_book import Side


class TokenClass(str, enum.Enum):
    LIMIT = "limit"
    CANCEL = "cancel"
    MARKET = "market"
    OUT_OF_BAND = "out_of_band"


_CLASS_PREFIX = immutabledict(
    {
        TokenClass.LIMIT: "l",
        TokenClass.CANCEL: "c",
        TokenClass.MARKET: "mu",
        TokenClass.OUT_OF_BAND: "eta",
    }
)
_SIDE_SUFFIX = immutabledict({Side.BID: "B", Side.ASK: "A"})


@dataclasses.dataclass(frozen=True)
class Token:
    """Decoded token: class, side and relative price (None if unpriced)."""

    kind: TokenClass
    side: Side
    q: Optional[int] = None


@dataclasses.dataclass(frozen=True)
class EventRange:
    """Contiguous id range for one (class, side) pair."""

    kind: TokenClass
    side: Side
    min_q: Optional[int]
    max_q: Optional[int]

    def __post_init__(self):
        if (self.min_q is None) != (self.max_q is None):
            raise TypeError("min_q and max_q must both be set or both be None")
        if self.min_q is not None and self.min_q > self.max_q:
            raise ValueError(f"min_q ({self.min_q}) must be <= max_q ({self.max_q})")

    @property
    def size(self) -> int:
        return 1 if self.min_q is None else self.max_q - self.min_q + 1


def vocab_size(max_relative_price: int) -> int:
    """Returns |O| = 4Q + 4."""
    if max_relative_price < 1:
        raise ValueError(
            f"max relative price Q must be >= 1, got {max_relative_price}"
        )
    return 4 * max_relative_price + 4


class Vocabulary:
    """Bijection between token ids 0..4Q+3 and `Token`s. Immutable."""

    def __init__(self, max_relative_price: int):
        self._size = vocab_size(max_relative_price)
        self.max_relative_price = max_relative_price
        q = max_relative_price
        self.event_ranges: Tuple[EventRange, ...] = (
            EventRange(TokenClass.LIMIT, Side.BID, 1, q),
            EventRange(TokenClass.LIMIT, Side.ASK, 1, q),
            EventRange(TokenClass.CANCEL, Side.BID, 1, q),
            EventRange(TokenClass.CANCEL, Side.ASK, 1, q),
            EventRange(TokenClass.MARKET, Side.BID, None, None),
            EventRange(TokenClass.MARKET, Side.ASK, None, None),
            EventRange(TokenClass.OUT_OF_BAND, Side.BID, None, None),
            EventRange(TokenClass.OUT_OF_BAND, Side.ASK, None, None),
        )
        offsets = {}
        offset = 0
        for r in self.event_ranges:
            offsets[(r.kind, r.side)] = offset
            offset += r.size
        self._offsets = immutabledict(offsets)
        self._names = tuple(self._name(self.decode(i)) for i in range(self._size))
        self._ids_by_name = immutabledict({n: i for i, n in enumerate(self._names)})

    @property
    def size(self) -> int:
        return self._size

    def __len__(self) -> int:
        return self._size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.max_relative_price == other.max_relative_price

    def __hash__(self) -> int:
        return hash(("Vocabulary", self.max_relative_price))

    def encode(self, token: Token) -> int:
        """Maps a token to its id.

        Raises:
          EncodeError: if the token is outside the vocabulary.
        """
        key = (token.kind, token.side)
        if key not in self._offsets:
            raise errors.EncodeError(f"unknown token class {key}")
        offset = self._offsets[key]
        if token.kind in (TokenClass.LIMIT, TokenClass.CANCEL):
            if token.q is None or not 1 <= token.q <= self.max_relative_price:
                raise errors.EncodeError(
                    f"relative price {token.q} out of range "
                    f"[1, {self.max_relative_price}]"
                )
            return offset + token.q - 1
        if token.q is not None:
            raise errors.EncodeError(f"{token.kind.value} tokens carry no price")
        return offset

    def decode(self, token_id: int) -> Token:
        """Maps an id back to its token.

        Raises:
          EncodeError: if the id is out of range.
        """
        if not 0 <= token_id < self._size:
            raise errors.EncodeError(
                f"token id {token_id} out of range [0, {self._size})"
            )
        current_offset = 0
        for r in self.event_ranges:
            if token_id < current_offset + r.size:
                q = None if r.min_q is None else r.min_q + (token_id - current_offset)
                return Token(kind=r.kind, side=r.side, q=q)
            current_offset += r.size
        raise AssertionError("unreachable")

    def ids_of(self, kind: TokenClass) -> List[int]:
        return [i for i in range(self._size) if self.decode(i).kind is kind]

    def token_name(self, token_id: int) -> str:
        return self._names[token_id]

    def token_id(self, name: str) -> int:
        if name not in self._ids_by_name:
            raise errors.EncodeError(f"unknown token name {name!r}")
        return self._ids_by_name[name]

    @property
    def names(self) -> Tuple[str, ...]:
        return self._names

    @staticmethod
    def _name(token: Token) -> str:
        name = f"{_CLASS_PREFIX[token.kind]}_{_SIDE_SUFFIX[token.side]}"
        return name if token.q is None else f"{name}_{token.q}"

    def to_dict(self) -> Dict[str, Any]:
        """Self-describing form embedded in run manifests."""
        return {
            "max_relative_price": self.max_relative_price,
            "size": self._size,
            "tokens": list(self._names),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Vocabulary":
        vocab = cls(int(d["max_relative_price"]))
        if list(vocab.names) != list(d.get("tokens", vocab.names)):
            raise errors.ConfigError("token layout in manifest does not match")
        return vocab
