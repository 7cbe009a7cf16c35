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

"""MLE pretraining, discriminator training and the adversarial loop."""

import csv
import dataclasses
import functools
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import gin
import jax
import jax.numpy as jnp
import numpy as np
import optax
from absl import logging
from flax.training import train_state
from sklearn.model_selection import train_test_split

from flowgan import errors, models, preprocessors

PRNGKey = jnp.ndarray
TrainState = train_state.TrainState

HISTORY_FIELDS = (
    "round",
    "pg_loss",
    "mean_reward",
    "disc_loss",
    "disc_accuracy",
    "oracle_nll",
)


@gin.configurable
@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    Attributes:
      seq_len: generated length T; equals half the slice length.
      num_rollouts: Monte-Carlo completions N per action value.
      batch_size: sequences per optimizer step.
      pretrain_epochs: MLE epochs over the training pairs.
      disc_pretrain_steps: rounds of fresh negatives before adversarial training.
      adversarial_rounds: outer iterations of the adversarial loop.
      g_steps: policy-gradient steps per round.
      d_steps: discriminator retrainings per round, each on fresh negatives.
      d_epochs: epochs per discriminator retraining.
      mle_learning_rate: Adam learning rate for MLE pretraining.
      pg_learning_rate: Adam learning rate for policy-gradient steps.
      disc_learning_rate: Adam learning rate for the discriminator.
      clip_norm: global gradient norm clip.
      holdout_fraction: share of pairs held out for the NLL report.
      max_negatives: cap on negatives generated per discriminator retraining.
      seed: master seed.
    """

    seq_len: int = 200
    num_rollouts: int = 8
    batch_size: int = 32
    pretrain_epochs: int = 10
    disc_pretrain_steps: int = 3
    adversarial_rounds: int = 20
    g_steps: int = 1
    d_steps: int = 3
    d_epochs: int = 3
    mle_learning_rate: float = 1e-2
    pg_learning_rate: float = 1e-3
    disc_learning_rate: float = 1e-3
    clip_norm: float = 5.0
    holdout_fraction: float = 0.1
    max_negatives: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.seq_len < 1:
            raise errors.ConfigError(f"seq_len must be >= 1, got {self.seq_len}")
        if self.num_rollouts < 1:
            raise errors.ConfigError(
                f"num_rollouts must be >= 1, got {self.num_rollouts}"
            )
        if self.batch_size < 1 or self.max_negatives < 1:
            raise errors.ConfigError("batch_size and max_negatives must be >= 1")
        for name in (
            "pretrain_epochs",
            "disc_pretrain_steps",
            "adversarial_rounds",
            "g_steps",
            "d_steps",
            "d_epochs",
        ):
            if getattr(self, name) < 0:
                raise errors.ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise errors.ConfigError(
                f"holdout_fraction must lie in [0, 1), got {self.holdout_fraction}"
            )


def make_optimizer(learning_rate: float, clip_norm: float) -> optax.GradientTransformation:
    return optax.chain(optax.clip_by_global_norm(clip_norm), optax.adam(learning_rate))


def create_train_states(
    model: models.SeqGan, key: PRNGKey, config: TrainConfig
) -> Tuple[TrainState, TrainState]:
    gen_params, disc_params = model.init(key)
    gen_state = TrainState.create(
        apply_fn=model.generator.apply,
        params=gen_params,
        tx=make_optimizer(config.mle_learning_rate, config.clip_norm),
    )
    disc_state = TrainState.create(
        apply_fn=model.discriminator.apply,
        params=disc_params,
        tx=make_optimizer(config.disc_learning_rate, config.clip_norm),
    )
    return gen_state, disc_state


def with_optimizer(
    state: TrainState, learning_rate: float, clip_norm: float
) -> TrainState:
    """Swaps in a fresh optimizer, keeping params and step."""
    tx = make_optimizer(learning_rate, clip_norm)
    return state.replace(tx=tx, opt_state=tx.init(state.params))


def _check_finite(loss, grads, step: int, what: str) -> float:
    loss = float(loss)
    grad_norm = float(optax.global_norm(grads))
    if not (np.isfinite(loss) and np.isfinite(grad_norm)):
        raise errors.NumericError(
            f"non-finite {what}", {"step": step, "loss": loss, "grad_norm": grad_norm}
        )
    return grad_norm


def _minibatches(
    num_examples: int, batch_size: int, rng: np.random.Generator
) -> List[np.ndarray]:
    order = rng.permutation(num_examples)
    return [order[i : i + batch_size] for i in range(0, num_examples, batch_size)]


# MLE pretraining.


@functools.partial(jax.jit, static_argnums=0)
def _mle_step(model: models.SeqGan, state: TrainState, starts, targets):
    def loss_fn(params):
        return model.nll(params, starts, targets) / targets.shape[-1]

    loss, grads = jax.value_and_grad(loss_fn)(state.params)
    return state.apply_gradients(grads=grads), loss, grads


def split_pairs(
    pairs: Sequence[preprocessors.TrainingPair], config: TrainConfig
) -> Tuple[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    """Splits pairs into ((train starts, reals), (held-out starts, reals))."""
    if not pairs:
        raise errors.ConfigError("training corpus is empty")
    starts, reals = preprocessors.pairs_to_arrays(pairs)
    if reals.shape[1] != config.seq_len:
        raise errors.ConfigError(
            f"pairs have length {reals.shape[1]} but seq_len is {config.seq_len}"
        )
    num_heldout = int(round(config.holdout_fraction * len(pairs)))
    if num_heldout == 0 or num_heldout == len(pairs):
        return (starts, reals), (starts[:0], reals[:0])
    train_idx, heldout_idx = train_test_split(
        np.arange(len(pairs)), test_size=num_heldout, random_state=config.seed
    )
    train_idx.sort()
    heldout_idx.sort()
    return (starts[train_idx], reals[train_idx]), (
        starts[heldout_idx],
        reals[heldout_idx],
    )


def pretrain_generator_mle(
    model: models.SeqGan,
    gen_state: TrainState,
    pairs: Sequence[preprocessors.TrainingPair],
    config: TrainConfig,
) -> Tuple[TrainState, List[float]]:
    """Maximum-likelihood pretraining of the generator.

    Args:
      model: the SeqGan.
      gen_state: generator train state.
      pairs: training pairs; the real half is the target, the start half the
        conditioning.
      config: training configuration.

    Returns:
      (updated state, held-out sequence NLL after each epoch). With no
      held-out split the training NLL is reported instead.

    Raises:
      ConfigError: if the corpus is empty.
      NumericError: if the loss or gradient becomes non-finite.
    """
    (starts, reals), (h_starts, h_reals) = split_pairs(pairs, config)
    if not len(h_starts):
        h_starts, h_reals = starts, reals
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.pretrain_epochs):
        for batch in _minibatches(len(starts), config.batch_size, rng):
            gen_state, loss, grads = _mle_step(
                model, gen_state, starts[batch], reals[batch]
            )
            _check_finite(loss, grads, int(gen_state.step), "MLE loss")
        heldout_nll = float(model.nll(gen_state.params, h_starts, h_reals))
        history.append(heldout_nll)
        logging.info("MLE epoch %d: held-out NLL %.4f", epoch, heldout_nll)
    return gen_state, history


# Discriminator.


@functools.partial(jax.jit, static_argnums=0)
def _disc_step(model: models.SeqGan, state: TrainState, tokens, labels):
    def loss_fn(params):
        logits = model.discriminator.apply({"params": params}, tokens)
        return optax.sigmoid_binary_cross_entropy(logits, labels).mean()

    loss, grads = jax.value_and_grad(loss_fn)(state.params)
    return state.apply_gradients(grads=grads), loss, grads


def balance_classes(
    real: np.ndarray, generated: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Subsamples both classes to the size of the smaller one."""
    n = min(len(real), len(generated))
    if n == 0:
        raise errors.ConfigError("both classes need at least one example")
    real_idx = np.sort(rng.choice(len(real), size=n, replace=False))
    gen_idx = np.sort(rng.choice(len(generated), size=n, replace=False))
    return real[real_idx], generated[gen_idx]


def pretrain_discriminator(
    model: models.SeqGan,
    disc_state: TrainState,
    real: np.ndarray,
    generated: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
) -> Tuple[TrainState, List[float]]:
    """Trains the discriminator on balanced real / generated sequences.

    Returns:
      (updated state, mean binary cross-entropy per epoch)
    """
    real, generated = balance_classes(np.asarray(real), np.asarray(generated), rng)
    tokens = np.concatenate([real, generated]).astype(np.int32)
    labels = np.concatenate([np.ones(len(real)), np.zeros(len(generated))]).astype(
        np.float32
    )
    losses = []
    for _ in range(config.d_epochs):
        epoch_losses = []
        for batch in _minibatches(len(tokens), config.batch_size, rng):
            disc_state, loss, grads = _disc_step(
                model, disc_state, tokens[batch], labels[batch]
            )
            _check_finite(loss, grads, int(disc_state.step), "discriminator loss")
            epoch_losses.append(float(loss))
        losses.append(float(np.mean(epoch_losses)))
    return disc_state, losses


def generate_negatives(
    model: models.SeqGan,
    gen_params: Any,
    starts: np.ndarray,
    count: int,
    length: int,
    key: PRNGKey,
) -> np.ndarray:
    """Generates `count` sequences from start states drawn with replacement."""
    idx_key, gen_key = jax.random.split(key)
    idx = jax.random.randint(idx_key, (count,), 0, len(starts))
    return np.asarray(model.generate(gen_params, starts[np.asarray(idx)], length, gen_key))


# Policy gradient.


@functools.partial(jax.jit, static_argnums=0)
def _pg_step(model: models.SeqGan, state: TrainState, starts, samples, q_values):
    def loss_fn(params):
        lps = model.sequence_log_probs(params, starts, samples)
        return -jnp.mean(jnp.sum(lps * jax.lax.stop_gradient(q_values), axis=-1))

    loss, grads = jax.value_and_grad(loss_fn)(state.params)
    return state.apply_gradients(grads=grads), loss, grads


def policy_gradient_update(
    model: models.SeqGan,
    gen_state: TrainState,
    starts,
    samples,
    q_values,
) -> Tuple[TrainState, float]:
    """One optimizer step on -mean_b sum_t log G(y_t | Y_1:t-1) * Q_t.

    Raises:
      NumericError: if the loss or the gradient is non-finite. The state is
        not updated in that case.
    """
    new_state, loss, grads = _pg_step(
        model,
        gen_state,
        jnp.asarray(starts, jnp.int32),
        jnp.asarray(samples, jnp.int32),
        jnp.asarray(q_values),
    )
    _check_finite(loss, grads, int(gen_state.step), "policy gradient")
    return new_state, float(loss)


def policy_gradient_step(
    model: models.SeqGan,
    gen_state: TrainState,
    disc_params: Any,
    starts,
    config: TrainConfig,
    key: PRNGKey,
) -> Tuple[TrainState, Dict[str, float]]:
    """Samples a batch, scores it with rollouts and updates the generator."""
    sample_key, rollout_key = jax.random.split(key)
    samples = model.generate(gen_state.params, starts, config.seq_len, sample_key)
    q_values = model.rollout_values(
        gen_state.params, disc_params, starts, samples, rollout_key, config.num_rollouts
    )
    gen_state, loss = policy_gradient_update(model, gen_state, starts, samples, q_values)
    return gen_state, {
        "pg_loss": loss,
        "mean_reward": float(jnp.mean(q_values[..., -1])),
    }


def adversarial_train(
    model: models.SeqGan,
    gen_state: TrainState,
    disc_state: TrainState,
    pairs: Sequence[preprocessors.TrainingPair],
    config: TrainConfig,
    key: PRNGKey,
    start_round: int = 0,
    oracle: Optional[Callable[[Any], float]] = None,
    on_round_end: Optional[Callable[[int, TrainState, TrainState], None]] = None,
) -> Tuple[TrainState, TrainState, List[Dict[str, float]]]:
    """Alternates policy-gradient and discriminator steps.

    Round r draws every random number from fold_in(key, r) (and a numpy
    generator seeded by (seed, r)), so resuming at `start_round` from the
    states saved after round start_round - 1 reproduces the run exactly.

    Args:
      model: the SeqGan.
      gen_state: generator state; its optimizer should already be the
        policy-gradient one (see `with_optimizer`).
      disc_state: discriminator state.
      pairs: training pairs; starts are sampled uniformly with replacement.
      config: training configuration.
      key: master PRNG key.
      start_round: first round to run.
      oracle: optional callable mapping generator params to an oracle NLL.
      on_round_end: optional callback, e.g. for checkpointing.

    Returns:
      (generator state, discriminator state, one metrics dict per round)
    """
    if not pairs:
        raise errors.ConfigError("training corpus is empty")
    starts, reals = preprocessors.pairs_to_arrays(pairs)
    num_negatives = min(len(reals), config.max_negatives)
    history = []
    for r in range(start_round, config.adversarial_rounds):
        round_key = jax.random.fold_in(key, r)
        rng = np.random.default_rng([config.seed, r])
        metrics: Dict[str, float] = {"round": r}
        for g in range(config.g_steps):
            g_key = jax.random.fold_in(round_key, g)
            idx_key, step_key = jax.random.split(g_key)
            idx = np.asarray(
                jax.random.randint(idx_key, (config.batch_size,), 0, len(starts))
            )
            gen_state, step_metrics = policy_gradient_step(
                model, gen_state, disc_state.params, starts[idx], config, step_key
            )
            metrics.update(step_metrics)
        negatives = None
        for d in range(config.d_steps):
            d_key = jax.random.fold_in(round_key, config.g_steps + d)
            negatives = generate_negatives(
                model, gen_state.params, starts, num_negatives, config.seq_len, d_key
            )
            disc_state, losses = pretrain_discriminator(
                model, disc_state, reals, negatives, config, rng
            )
            if losses:
                metrics["disc_loss"] = losses[-1]
        if negatives is not None:
            metrics["disc_accuracy"] = model.discriminator_accuracy(
                disc_state.params, reals, negatives
            )
        if oracle is not None:
            metrics["oracle_nll"] = float(oracle(gen_state.params))
        logging.info("adversarial round %d: %s", r, metrics)
        history.append(metrics)
        if on_round_end is not None:
            on_round_end(r, gen_state, disc_state)
    return gen_state, disc_state, history


def train(
    model: models.SeqGan,
    pairs: Sequence[preprocessors.TrainingPair],
    config: TrainConfig,
    oracle: Optional[Callable[[Any], float]] = None,
    on_round_end: Optional[Callable[[int, TrainState, TrainState], None]] = None,
) -> Tuple[TrainState, TrainState, Dict[str, Any]]:
    """Runs MLE pretraining, discriminator pretraining and adversarial rounds.

    Returns:
      (generator state, discriminator state, history) where history holds
      "mle_nll" (per epoch), "disc_pretrain_loss" (per retraining) and
      "rounds" (per adversarial round).
    """
    key = jax.random.PRNGKey(config.seed)
    init_key, disc_key, adv_key = jax.random.split(key, 3)
    gen_state, disc_state = create_train_states(model, init_key, config)
    gen_state, mle_nll = pretrain_generator_mle(model, gen_state, pairs, config)

    starts, reals = preprocessors.pairs_to_arrays(pairs)
    num_negatives = min(len(reals), config.max_negatives)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    disc_losses = []
    for step in range(config.disc_pretrain_steps):
        negatives = generate_negatives(
            model,
            gen_state.params,
            starts,
            num_negatives,
            config.seq_len,
            jax.random.fold_in(disc_key, step),
        )
        disc_state, losses = pretrain_discriminator(
            model, disc_state, reals, negatives, config, rng
        )
        disc_losses.extend(losses)

    gen_state = with_optimizer(gen_state, config.pg_learning_rate, config.clip_norm)
    gen_state, disc_state, rounds = adversarial_train(
        model,
        gen_state,
        disc_state,
        pairs,
        config,
        adv_key,
        oracle=oracle,
        on_round_end=on_round_end,
    )
    history = {"mle_nll": mle_nll, "disc_pretrain_loss": disc_losses, "rounds": rounds}
    return gen_state, disc_state, history


def adversarial_key(config: TrainConfig) -> PRNGKey:
    """The master key `train` hands to `adversarial_train`."""
    return jax.random.split(jax.random.PRNGKey(config.seed), 3)[2]


def write_history_csv(rounds: Sequence[Dict[str, float]], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=HISTORY_FIELDS, restval="")
        writer.writeheader()
        for row in rounds:
            writer.writerow({k: row.get(k, "") for k in HISTORY_FIELDS})
