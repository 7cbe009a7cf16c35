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

"""Generator and discriminator networks."""

import dataclasses
from typing import Any, Sequence, Tuple

import gin
import jax.numpy as jnp
from flax import linen as nn

Array = jnp.ndarray
DType = Any
Carry = Tuple[Array, Array]


@gin.configurable
@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Sizes of the generator and discriminator networks."""

    vocab_size: int = 44
    emb_dim: int = 32
    hidden_dim: int = 64
    filter_widths: Sequence[int] = (2, 3, 5)
    num_filters: int = 32
    dtype: DType = jnp.float32

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError(f"vocab_size must be >= 1, got {self.vocab_size}")
        if min(self.emb_dim, self.hidden_dim, self.num_filters) < 1:
            raise ValueError("layer sizes must be positive")
        if not self.filter_widths or min(self.filter_widths) < 1:
            raise ValueError(f"bad filter widths {self.filter_widths}")
        object.__setattr__(self, "filter_widths", tuple(self.filter_widths))


def initial_carry(
    hidden_dim: int, batch_shape: Sequence[int] = (), dtype: DType = jnp.float32
) -> Carry:
    """Zero (cell, hidden) state for the generator's LSTM cell."""
    shape = tuple(batch_shape) + (hidden_dim,)
    return jnp.zeros(shape, dtype), jnp.zeros(shape, dtype)


class Generator(nn.Module):
    """Recurrent policy G(y_t | Y_1:t-1): embedding, LSTM cell, projection.

    One call consumes one token and returns the next carry and the logits of
    the next-token distribution.
    """

    config: ModelConfig

    def setup(self):
        cfg = self.config
        self.embed = nn.Embed(
            num_embeddings=cfg.vocab_size,
            features=cfg.emb_dim,
            dtype=cfg.dtype,
            param_dtype=cfg.dtype,
        )
        self.cell = nn.LSTMCell(
            features=cfg.hidden_dim, dtype=cfg.dtype, param_dtype=cfg.dtype
        )
        self.logits = nn.Dense(cfg.vocab_size, dtype=cfg.dtype, param_dtype=cfg.dtype)

    def __call__(self, carry: Carry, token: Array) -> Tuple[Carry, Array]:
        x = self.embed(token)
        carry, h = self.cell(carry, x)
        return carry, self.logits(h)


class Discriminator(nn.Module):
    """Convolutional sequence classifier D(Y_1:T).

    Embedding, one bank of SAME-padded convolutions per filter width with ReLU,
    max-pooling over time and a final affine score. Returns the logit; the
    probability of "real" is its sigmoid.
    """

    config: ModelConfig

    @nn.compact
    def __call__(self, tokens: Array) -> Array:
        cfg = self.config
        batch_shape = tokens.shape[:-1]
        x = tokens.reshape((-1, tokens.shape[-1]))
        x = nn.Embed(
            num_embeddings=cfg.vocab_size,
            features=cfg.emb_dim,
            dtype=cfg.dtype,
            param_dtype=cfg.dtype,
            name="embed",
        )(x)
        pooled = []
        for width in cfg.filter_widths:
            y = nn.Conv(
                features=cfg.num_filters,
                kernel_size=(width,),
                padding="SAME",
                dtype=cfg.dtype,
                param_dtype=cfg.dtype,
                name=f"conv_{width}",
            )(x)
            pooled.append(jnp.max(nn.relu(y), axis=-2))
        features = jnp.concatenate(pooled, axis=-1)
        logit = nn.Dense(1, dtype=cfg.dtype, param_dtype=cfg.dtype, name="score")(
            features
        )
        return logit[..., 0].reshape(batch_shape)
