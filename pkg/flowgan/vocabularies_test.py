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

"""Tests for vocabularies."""

import numpy as np
from absl.testing import absltest

from flowgan import errors, vocabularies
from flowgan.event_codec import Token, TokenClass
from flowgan.order_book import OrderBook, OrderEvent, OrderKind, Side


def _book():
    """Best bid 5468, best ask 5471."""
    book = OrderBook(0.01)
    book.apply_limit(Side.BID, 5468, 5)
    book.apply_limit(Side.ASK, 5471, 4)
    return book


class VocabulariesTest(absltest.TestCase):

    def setUp(self):
        super().setUp()
        self.vocab = vocabularies.build_vocabulary(
            vocabularies.VocabularyConfig(max_relative_price=5)
        )

    def _decode(self, event, book=None):
        token_id = vocabularies.encode_event(event, book or _book(), self.vocab)
        return vocabularies.decode_token(token_id, self.vocab)

    def test_buy_limit_three_ticks_below_ask(self):
        event = OrderEvent(OrderKind.LIMIT, Side.BID, 1.0, 0.0, 5468)
        self.assertEqual(Token(TokenClass.LIMIT, Side.BID, 3), self._decode(event))
        token_id = vocabularies.encode_event(event, _book(), self.vocab)
        self.assertEqual("l_B_3", self.vocab.token_name(token_id))

    def test_sell_cancel_beyond_band(self):
        event = OrderEvent(OrderKind.CANCEL, Side.ASK, 1.0, 0.0, 5468 + 7)
        self.assertEqual(Token(TokenClass.OUT_OF_BAND, Side.ASK), self._decode(event))

    def test_sell_cancel_inside_band(self):
        event = OrderEvent(OrderKind.CANCEL, Side.ASK, 1.0, 0.0, 5471)
        self.assertEqual(Token(TokenClass.CANCEL, Side.ASK, 3), self._decode(event))

    def test_market_orders(self):
        sell = OrderEvent(OrderKind.MARKET, Side.ASK, 1.0)
        buy = OrderEvent(OrderKind.MARKET, Side.BID, 1.0)
        self.assertEqual(Token(TokenClass.MARKET, Side.BID), self._decode(sell))
        self.assertEqual(Token(TokenClass.MARKET, Side.ASK), self._decode(buy))

    def test_marketable_limit_encodes_as_market(self):
        event = OrderEvent(OrderKind.LIMIT, Side.BID, 1.0, 0.0, 5471)
        self.assertEqual(Token(TokenClass.MARKET, Side.ASK), self._decode(event))

    def test_unquoted_reference_side(self):
        book = OrderBook(0.01)
        book.apply_limit(Side.BID, 5468, 5)
        event = OrderEvent(OrderKind.LIMIT, Side.BID, 1.0, 0.0, 5467)
        self.assertEqual(
            Token(TokenClass.OUT_OF_BAND, Side.BID), self._decode(event, book)
        )

    def test_encode_flow_advances_a_copy(self):
        book = _book()
        events = [
            OrderEvent(OrderKind.LIMIT, Side.BID, 1.0, 0.0, 5469),
            OrderEvent(OrderKind.LIMIT, Side.BID, 1.0, 1.0, 5469),
            OrderEvent(OrderKind.MARKET, Side.BID, 4.0, 2.0),
        ]
        tokens, after = vocabularies.encode_flow(events, book, self.vocab)
        self.assertEqual(np.int32, tokens.dtype)
        self.assertEqual(["l_B_2", "l_B_2", "mu_A"],
                         [self.vocab.token_name(t) for t in tokens])
        self.assertEqual(5471, book.best_ask())
        self.assertTrue(after.is_empty(Side.ASK))
        self.assertEqual(2, after.level_volume(Side.BID, 5469))

    def test_encode_flow_counts_losses(self):
        book = OrderBook(0.01)
        book.apply_limit(Side.BID, 100, 1)
        book.apply_limit(Side.ASK, 102, 1)
        book.apply_limit(Side.ASK, 103, 1)
        vocab = vocabularies.build_vocabulary(vocabularies.VocabularyConfig(3))
        events = [
            OrderEvent(OrderKind.LIMIT, Side.BID, 2.5, 0.0, 102),
            OrderEvent(OrderKind.CANCEL, Side.BID, 1.0, 1.0, 90),
            OrderEvent(OrderKind.LIMIT, Side.ASK, 1.0, 2.0, 120),
            OrderEvent(OrderKind.LIMIT, Side.BID, 1.0, 3.0, 103),
        ]
        losses = vocabularies.EncodeLosses()
        tokens, after = vocabularies.encode_flow(events, book, vocab, losses)
        self.assertEqual(["mu_A", "eta_B", "eta_A", "mu_A"],
                         [vocab.token_name(t) for t in tokens])
        self.assertEqual(2, losses.marketable_limits)
        self.assertEqual(1, losses.resting_residues)
        self.assertAlmostEqual(1.5, losses.residue_volume)
        self.assertEqual(1, losses.out_of_band_cancels)
        self.assertEqual(1, losses.out_of_band_limits)
        self.assertEqual(3, losses.total)
        self.assertEqual(1.5, after.level_volume(Side.BID, 102))

    def test_flow_sequence_validate(self):
        seq = vocabularies.FlowSequence([0, 3, 23])
        self.assertIs(seq, seq.validate(self.vocab, length=3))
        with self.assertRaises(errors.EncodeError):
            vocabularies.FlowSequence([24]).validate(self.vocab)
        with self.assertRaises(ValueError):
            seq.validate(self.vocab, length=4)

    def test_token_counts(self):
        counts = vocabularies.token_counts([0, 0, 23], self.vocab)
        self.assertLen(counts, 24)
        self.assertEqual(2, counts[0])
        self.assertEqual(1, counts[23])


if __name__ == "__main__":
    absltest.main()
