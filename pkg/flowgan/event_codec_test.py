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

"""Tests for event_codec."""

from absl.testing import absltest, parameterized

from flowgan import errors, event_codec
from flowgan.event_codec import Token, TokenClass
from flowgan.order_book import Side


class EventCodecTest(parameterized.TestCase):

    def test_vocab_size(self):
        self.assertEqual(8, event_codec.vocab_size(1))
        self.assertEqual(12, event_codec.vocab_size(2))
        self.assertEqual(44, event_codec.vocab_size(10))
        with self.assertRaises(ValueError):
            event_codec.vocab_size(0)

    @parameterized.parameters(*range(1, 21))
    def test_bijection(self, q):
        vocab = event_codec.Vocabulary(q)
        tokens = [vocab.decode(i) for i in range(vocab.size)]
        self.assertLen(set(tokens), vocab.size)
        for i, token in enumerate(tokens):
            self.assertEqual(i, vocab.encode(token))

    def test_class_partition(self):
        vocab = event_codec.Vocabulary(5)
        self.assertLen(vocab.ids_of(TokenClass.LIMIT), 10)
        self.assertLen(vocab.ids_of(TokenClass.CANCEL), 10)
        self.assertLen(vocab.ids_of(TokenClass.MARKET), 2)
        self.assertLen(vocab.ids_of(TokenClass.OUT_OF_BAND), 2)

    def test_layout(self):
        vocab = event_codec.Vocabulary(3)
        self.assertEqual(0, vocab.encode(Token(TokenClass.LIMIT, Side.BID, 1)))
        self.assertEqual(3, vocab.encode(Token(TokenClass.LIMIT, Side.ASK, 1)))
        self.assertEqual(8, vocab.encode(Token(TokenClass.CANCEL, Side.BID, 3)))
        self.assertEqual(12, vocab.encode(Token(TokenClass.MARKET, Side.BID)))
        self.assertEqual(13, vocab.encode(Token(TokenClass.MARKET, Side.ASK)))
        self.assertEqual(14, vocab.encode(Token(TokenClass.OUT_OF_BAND, Side.BID)))
        self.assertEqual(15, vocab.encode(Token(TokenClass.OUT_OF_BAND, Side.ASK)))

    def test_names(self):
        vocab = event_codec.Vocabulary(3)
        self.assertEqual("l_B_3", vocab.token_name(2))
        self.assertEqual("c_A_1", vocab.token_name(9))
        self.assertEqual("mu_B", vocab.token_name(12))
        self.assertEqual("eta_A", vocab.token_name(15))
        self.assertEqual(14, vocab.token_id("eta_B"))
        with self.assertRaises(errors.EncodeError):
            vocab.token_id("x_B")

    def test_invalid_tokens(self):
        vocab = event_codec.Vocabulary(3)
        with self.assertRaises(errors.EncodeError):
            vocab.encode(Token(TokenClass.LIMIT, Side.BID, 4))
        with self.assertRaises(errors.EncodeError):
            vocab.encode(Token(TokenClass.CANCEL, Side.ASK, 0))
        with self.assertRaises(errors.EncodeError):
            vocab.encode(Token(TokenClass.MARKET, Side.ASK, 1))
        with self.assertRaises(errors.EncodeError):
            vocab.decode(16)
        with self.assertRaises(errors.EncodeError):
            vocab.decode(-1)

    def test_dict_round_trip(self):
        vocab = event_codec.Vocabulary(4)
        self.assertEqual(vocab, event_codec.Vocabulary.from_dict(vocab.to_dict()))
        bad = dict(vocab.to_dict(), tokens=list(reversed(vocab.names)))
        with self.assertRaises(errors.ConfigError):
            event_codec.Vocabulary.from_dict(bad)


if __name__ == "__main__":
    absltest.main()
