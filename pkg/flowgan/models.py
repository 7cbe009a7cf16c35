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

"""SeqGAN model: generation, likelihoods, discriminator scores and rollouts."""

import functools
from typing import Any, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from flax import struct
from jax import lax

from flowgan import network
from flowgan.network import Carry, ModelConfig

Array = jnp.ndarray
PRNGKey = jnp.ndarray
Params = Any


@struct.dataclass
class GenerationState:
    """Generator carry plus the token fed at the next step."""

    carry: Carry
    token: Array


def _check_start(start: Array) -> None:
    if start.shape[-1] < 1:
        raise ValueError("start sequence must not be empty")


class SeqGan:
    """Generator / discriminator pair with jit-compiled kernels.

    Every method accepts a single sequence ([T]) or a batch ([B, T]); batched
    calls vmap the single-sequence kernel so results for one row never
    depend on the batch it is part of.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.generator = network.Generator(config)
        self.discriminator = network.Discriminator(config)

    def init(self, key: PRNGKey) -> Tuple[Params, Params]:
        """Returns freshly initialized (generator, discriminator) params."""
        gen_key, disc_key = jax.random.split(key)
        carry = network.initial_carry(self.config.hidden_dim, (), self.config.dtype)
        token = jnp.zeros((), jnp.int32)
        gen_params = self.generator.init(gen_key, carry, token)["params"]
        disc_params = self.discriminator.init(
            disc_key, jnp.zeros((1, max(self.config.filter_widths)), jnp.int32)
        )["params"]
        return gen_params, disc_params

    # Generator.

    def _apply_gen(self, params: Params, carry: Carry, token: Array):
        return self.generator.apply({"params": params}, carry, token)

    @functools.partial(jax.jit, static_argnums=0)
    def gen_step(self, params: Params, carry: Carry, token: Array):
        """One policy step: (next carry, probability vector over tokens)."""
        carry, logits = self._apply_gen(params, carry, token)
        return carry, jax.nn.softmax(logits, axis=-1)

    def _condition_one(self, params: Params, start: Array) -> GenerationState:
        carry = network.initial_carry(self.config.hidden_dim, (), self.config.dtype)

        def body(carry, token):
            carry, _ = self._apply_gen(params, carry, token)
            return carry, None

        carry, _ = lax.scan(body, carry, start[:-1])
        return GenerationState(carry=carry, token=start[-1])

    @functools.partial(jax.jit, static_argnums=0)
    def _condition(self, params: Params, start: Array) -> GenerationState:
        if start.ndim == 1:
            return self._condition_one(params, start)
        return jax.vmap(self._condition_one, in_axes=(None, 0))(params, start)

    def condition_on_start(self, params: Params, start) -> GenerationState:
        """Consumes a start sequence.

        All start tokens but the last update the carry; the last one is the
        first input of generation.

        Raises:
          ValueError: if the start sequence is empty.
        """
        start = jnp.asarray(start, jnp.int32)
        _check_start(start)
        return self._condition(params, start)

    def _generate_one(
        self, params: Params, start: Array, key: PRNGKey, length: int, greedy: bool
    ) -> Array:
        state = self._condition_one(params, start)

        def body(state, step_key):
            carry, token = state
            carry, logits = self._apply_gen(params, carry, token)
            if greedy:
                nxt = jnp.argmax(logits, axis=-1)
            else:
                nxt = jax.random.categorical(step_key, logits)
            nxt = nxt.astype(jnp.int32)
            return (carry, nxt), nxt

        _, tokens = lax.scan(body, (state.carry, state.token), jax.random.split(key, length))
        return tokens

    @functools.partial(jax.jit, static_argnums=(0, 4, 5))
    def _generate(self, params, start, key, length, greedy):
        if start.ndim == 1:
            return self._generate_one(params, start, key, length, greedy)
        keys = jax.random.split(key, start.shape[0])
        return jax.vmap(self._generate_one, in_axes=(None, 0, 0, None, None))(
            params, start, keys, length, greedy
        )

    def generate(
        self, params: Params, start, length: int, key: PRNGKey, greedy: bool = False
    ) -> Array:
        """Samples `length` tokens after a start sequence.

        Args:
          params: generator params.
          start: start sequence [S] or batch [B, S].
          length: number of generated tokens T.
          key: PRNG key; batch rows use split(key, B)[i].
          greedy: take the argmax at each step instead of sampling.

        Returns:
          int32 tokens of shape [T] or [B, T].
        """
        start = jnp.asarray(start, jnp.int32)
        _check_start(start)
        if length < 0:
            raise ValueError(f"length must be >= 0, got {length}")
        return self._generate(params, start, key, int(length), bool(greedy))

    def _log_probs_one(self, params: Params, start: Array, targets: Array) -> Array:
        state = self._condition_one(params, start)

        def body(state, target):
            carry, token = state
            carry, logits = self._apply_gen(params, carry, token)
            lp = jax.nn.log_softmax(logits, axis=-1)[target]
            return (carry, target), lp

        _, lps = lax.scan(body, (state.carry, state.token), targets)
        return lps

    def sequence_log_probs(self, params: Params, start, targets) -> Array:
        """Log G(y_t | Y_1:t-1) of the given targets after the start, shape [..., T].

        Not jitted so it can be differentiated inside a caller's jit.
        """
        start = jnp.asarray(start, jnp.int32)
        targets = jnp.asarray(targets, jnp.int32)
        _check_start(start)
        if start.ndim == 1:
            return self._log_probs_one(params, start, targets)
        return jax.vmap(self._log_probs_one, in_axes=(None, 0, 0))(
            params, start, targets
        )

    @functools.partial(jax.jit, static_argnums=0)
    def nll(self, params: Params, start, targets) -> Array:
        """Mean over the batch of the sequence negative log-likelihood."""
        lps = self.sequence_log_probs(params, start, targets)
        return -jnp.mean(jnp.sum(lps, axis=-1))

    # Discriminator.

    @functools.partial(jax.jit, static_argnums=0)
    def discriminator_logit(self, params: Params, tokens) -> Array:
        return self.discriminator.apply({"params": params}, jnp.asarray(tokens, jnp.int32))

    def discriminator_score(self, params: Params, tokens) -> Array:
        """Probability in (0, 1) that each sequence is real."""
        return jax.nn.sigmoid(self.discriminator_logit(params, tokens))

    def discriminator_accuracy(self, params: Params, real, generated) -> float:
        real_scores = np.asarray(self.discriminator_score(params, real))
        fake_scores = np.asarray(self.discriminator_score(params, generated))
        correct = np.sum(real_scores > 0.5) + np.sum(fake_scores <= 0.5)
        return float(correct / (real_scores.size + fake_scores.size))

    # Rollouts.

    def _complete(
        self,
        gen_params: Params,
        state: GenerationState,
        seq: Array,
        given: Array,
        key: PRNGKey,
    ) -> Array:
        """Keeps seq[:given] and samples the rest with the generator."""
        length = seq.shape[-1]

        def body(state, inputs):
            i, target, step_key = inputs
            carry, token = state
            carry, logits = self._apply_gen(gen_params, carry, token)
            sampled = jax.random.categorical(step_key, logits).astype(jnp.int32)
            out = jnp.where(i < given, target, sampled)
            return (carry, out), out

        _, tokens = lax.scan(
            body,
            (state.carry, state.token),
            (jnp.arange(length), seq, jax.random.split(key, length)),
        )
        return tokens

    def _rollout_values_one(
        self,
        gen_params: Params,
        disc_params: Params,
        start: Array,
        seq: Array,
        key: PRNGKey,
        num_rollouts: int,
    ) -> Array:
        length = seq.shape[-1]
        final = jax.nn.sigmoid(self.discriminator.apply({"params": disc_params}, seq))
        if length == 1:
            return final[None]
        state = self._condition_one(gen_params, start)

        def value_at(inputs):
            given, t_key = inputs
            keys = jax.random.split(t_key, num_rollouts)
            completions = jax.vmap(
                self._complete, in_axes=(None, None, None, None, 0)
            )(gen_params, state, seq, given, keys)
            scores = jax.nn.sigmoid(
                self.discriminator.apply({"params": disc_params}, completions)
            )
            return jnp.mean(scores)

        givens = jnp.arange(1, length)
        values = lax.map(value_at, (givens, jax.random.split(key, length - 1)))
        return jnp.concatenate([values, final[None]])

    @functools.partial(jax.jit, static_argnums=(0, 6))
    def _rollout_values(self, gen_params, disc_params, start, seq, key, num_rollouts):
        if seq.ndim == 1:
            return self._rollout_values_one(
                gen_params, disc_params, start, seq, key, num_rollouts
            )
        keys = jax.random.split(key, seq.shape[0])
        return jax.vmap(
            self._rollout_values_one, in_axes=(None, None, 0, 0, 0, None)
        )(gen_params, disc_params, start, seq, keys, num_rollouts)

    def rollout_values(
        self,
        gen_params: Params,
        disc_params: Params,
        start,
        seq,
        key: PRNGKey,
        num_rollouts: int,
    ) -> Array:
        """Action values Q(Y_1:t-1, y_t) for every t of a generated sequence.

        For t < T the value is the mean discriminator score of `num_rollouts`
        Monte-Carlo completions of Y_1:t drawn from the generator; for t = T it
        is the discriminator score of the sequence itself.

        Returns:
          values of shape [T] or [B, T].
        """
        if num_rollouts < 1:
            raise ValueError(f"num_rollouts must be >= 1, got {num_rollouts}")
        start = jnp.asarray(start, jnp.int32)
        _check_start(start)
        return self._rollout_values(
            gen_params,
            disc_params,
            start,
            jnp.asarray(seq, jnp.int32),
            key,
            int(num_rollouts),
        )

    def rollout_value(
        self,
        gen_params: Params,
        disc_params: Params,
        start,
        prefix,
        length: int,
        key: PRNGKey,
        num_rollouts: int,
    ) -> Array:
        """Action value of a single prefix Y_1:t with 1 <= t <= length.

        At t == length the discriminator score is returned and `key` is unused.
        """
        prefix = jnp.asarray(prefix, jnp.int32)
        t = prefix.shape[-1]
        if not 1 <= t <= length:
            raise ValueError(f"prefix length must lie in [1, {length}], got {t}")
        if t == length:
            return self.discriminator_score(disc_params, prefix)
        if num_rollouts < 1:
            raise ValueError(f"num_rollouts must be >= 1, got {num_rollouts}")
        start = jnp.asarray(start, jnp.int32)
        _check_start(start)
        return self._prefix_value(
            gen_params, disc_params, start, prefix, key, int(length), int(num_rollouts)
        )

    @functools.partial(jax.jit, static_argnums=(0, 6, 7))
    def _prefix_value(
        self, gen_params, disc_params, start, prefix, key, length, num_rollouts
    ):
        t = prefix.shape[-1]
        seq = jnp.zeros((length,), jnp.int32).at[:t].set(prefix)
        state = self._condition_one(gen_params, start)
        keys = jax.random.split(key, num_rollouts)
        completions = jax.vmap(self._complete, in_axes=(None, None, None, None, 0))(
            gen_params, state, seq, t, keys
        )
        scores = jax.nn.sigmoid(
            self.discriminator.apply({"params": disc_params}, completions)
        )
        return jnp.mean(scores)
