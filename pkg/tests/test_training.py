"""Tests for pretraining, the adversarial loop and checkpoints."""

import csv
import dataclasses

import jax
import jax.numpy as jnp
import numpy as np
import pytest

from flowgan import checkpoints, errors, models, network, preprocessors, training

MODEL_CONFIG = network.ModelConfig(
    vocab_size=8, emb_dim=4, hidden_dim=8, filter_widths=(2, 3), num_filters=4
)
TINY = training.TrainConfig(
    seq_len=4,
    num_rollouts=2,
    batch_size=4,
    pretrain_epochs=1,
    disc_pretrain_steps=1,
    adversarial_rounds=2,
    g_steps=1,
    d_steps=1,
    d_epochs=1,
    holdout_fraction=0.25,
    max_negatives=8,
    seed=3,
)


@pytest.fixture(scope="module")
def model():
    return models.SeqGan(MODEL_CONFIG)


def _pairs(num_pairs=8, seq_len=4, seed=0):
    rng = np.random.default_rng(seed)
    tokens = rng.integers(0, 8, size=num_pairs * 2 * seq_len)
    return preprocessors.slice_flow(tokens, 2 * seq_len)


def _leaves_equal(a, b):
    for x, y in zip(jax.tree_util.tree_leaves(a), jax.tree_util.tree_leaves(b)):
        np.testing.assert_allclose(np.asarray(x), np.asarray(y), rtol=1e-6, atol=1e-7)


def test_train_config_validation():
    """Test that bad hyperparameters raise ConfigError."""
    with pytest.raises(errors.ConfigError):
        training.TrainConfig(seq_len=0)
    with pytest.raises(errors.ConfigError):
        training.TrainConfig(num_rollouts=0)
    with pytest.raises(errors.ConfigError):
        training.TrainConfig(holdout_fraction=1.0)
    with pytest.raises(errors.ConfigError):
        training.TrainConfig(adversarial_rounds=-1)


def test_split_pairs():
    """Test the held-out split and its errors."""
    pairs = _pairs()
    (starts, reals), (h_starts, h_reals) = training.split_pairs(pairs, TINY)
    assert len(starts) == 6 and len(h_starts) == 2
    all_reals = {tuple(r) for r in reals} | {tuple(r) for r in h_reals}
    assert len(all_reals) == len({tuple(p.real.tokens) for p in pairs})
    with pytest.raises(errors.ConfigError):
        training.split_pairs([], TINY)
    with pytest.raises(errors.ConfigError):
        training.split_pairs(pairs, dataclasses.replace(TINY, seq_len=5))


def test_mle_pretraining_learns_constant_corpus(model):
    """Test that MLE drives down the NLL of a trivially learnable corpus."""
    pairs = preprocessors.slice_flow(np.full(32 * 10, 3), 10)
    config = dataclasses.replace(
        TINY, seq_len=5, pretrain_epochs=10, batch_size=8, mle_learning_rate=0.05
    )
    gen_state, _ = training.create_train_states(model, jax.random.PRNGKey(0), config)
    starts, reals = preprocessors.pairs_to_arrays(pairs)
    before = float(model.nll(gen_state.params, starts, reals))
    gen_state, history = training.pretrain_generator_mle(model, gen_state, pairs, config)
    assert len(history) == 10
    assert history[-1] < 0.6 * before


def test_discriminator_separates_classes(model):
    """Test that the discriminator learns an obvious difference."""
    config = dataclasses.replace(TINY, d_epochs=20, batch_size=16, disc_learning_rate=0.05)
    _, disc_state = training.create_train_states(model, jax.random.PRNGKey(0), config)
    real = np.zeros((32, 6), np.int32)
    generated = np.ones((32, 6), np.int32)
    disc_state, losses = training.pretrain_discriminator(
        model, disc_state, real, generated, config, np.random.default_rng(0)
    )
    assert len(losses) == 20
    assert losses[-1] < losses[0]
    assert model.discriminator_accuracy(disc_state.params, real, generated) == 1.0


def test_balance_classes():
    """Test subsampling to the smaller class."""
    real, generated = training.balance_classes(
        np.zeros((10, 3)), np.ones((4, 3)), np.random.default_rng(0)
    )
    assert len(real) == len(generated) == 4
    with pytest.raises(errors.ConfigError):
        training.balance_classes(np.zeros((0, 3)), np.ones((4, 3)), np.random.default_rng(0))


def test_zero_rewards_leave_params_unchanged(model):
    """Test that Q == 0 gives a zero update."""
    gen_state, _ = training.create_train_states(model, jax.random.PRNGKey(0), TINY)
    starts = jnp.array([[1, 2], [3, 4]])
    samples = jnp.array([[0, 1, 2], [3, 4, 5]])
    new_state, _ = training.policy_gradient_update(
        model, gen_state, starts, samples, jnp.zeros((2, 3))
    )
    _leaves_equal(gen_state.params, new_state.params)


def test_non_finite_rewards_raise(model):
    """Test that NaN action values raise NumericError."""
    gen_state, _ = training.create_train_states(model, jax.random.PRNGKey(0), TINY)
    with pytest.raises(errors.NumericError) as info:
        training.policy_gradient_update(
            model,
            gen_state,
            jnp.array([[1, 2]]),
            jnp.array([[0, 1, 2]]),
            jnp.array([[1.0, jnp.nan, 1.0]]),
        )
    assert "grad_norm" in info.value.diagnostics
    assert info.value.exit_code == 5


def test_uniform_policy_gradient(model):
    """Test the bias gradient of the policy loss under a uniform policy."""
    gen_state, _ = training.create_train_states(model, jax.random.PRNGKey(0), TINY)
    params = dict(gen_state.params)
    params["logits"] = {
        "kernel": jnp.zeros_like(params["logits"]["kernel"]),
        "bias": jnp.zeros_like(params["logits"]["bias"]),
    }
    gen_state = gen_state.replace(params=params)
    starts = jnp.array([[1, 2], [3, 4]])
    samples = jnp.array([[0, 1, 1], [7, 1, 2]])
    q_values = jnp.array([[0.2, 0.5, 0.9], [0.4, 0.1, 0.3]])
    _, _, grads = training._pg_step(model, gen_state, starts, samples, q_values)
    onehot = np.eye(8)[np.asarray(samples)]
    q = np.asarray(q_values)[..., None]
    expected = -np.mean(np.sum(q * (onehot - 1.0 / 8), axis=1), axis=0)
    np.testing.assert_allclose(grads["logits"]["bias"], expected, rtol=1e-5, atol=1e-6)


def test_train_is_deterministic(model):
    """Test that the same seed reproduces params and history."""
    pairs = _pairs()
    gen_a, disc_a, history_a = training.train(model, pairs, TINY)
    gen_b, disc_b, history_b = training.train(model, pairs, TINY)
    _leaves_equal(gen_a.params, gen_b.params)
    _leaves_equal(disc_a.params, disc_b.params)
    assert history_a == history_b
    assert len(history_a["mle_nll"]) == 1
    assert [r["round"] for r in history_a["rounds"]] == [0, 1]
    assert set(training.HISTORY_FIELDS) - {"oracle_nll"} <= set(history_a["rounds"][0])


def test_resume_reproduces_rounds(model, tmp_path):
    """Test that resuming from a checkpoint reproduces the remaining rounds."""
    pairs = _pairs()
    saved = {}

    def on_round_end(r, gen_state, disc_state):
        path = checkpoints.checkpoint_path(str(tmp_path), r)
        checkpoints.save_checkpoint(path, gen_state, disc_state, r, TINY.seed)
        saved[r] = path

    gen_full, disc_full, history = training.train(
        model, pairs, TINY, on_round_end=on_round_end
    )
    assert checkpoints.latest_checkpoint(str(tmp_path)) == saved[1]

    template_gen, template_disc = training.create_train_states(
        model, jax.random.PRNGKey(0), TINY
    )
    template_gen = training.with_optimizer(
        template_gen, TINY.pg_learning_rate, TINY.clip_norm
    )
    gen_state, disc_state, meta = checkpoints.load_checkpoint(
        saved[0], template_gen, template_disc
    )
    assert meta == {"round": 0, "seed": TINY.seed}
    gen_resumed, disc_resumed, rounds = training.adversarial_train(
        model,
        gen_state,
        disc_state,
        pairs,
        TINY,
        training.adversarial_key(TINY),
        start_round=1,
    )
    assert len(rounds) == 1
    for k in rounds[0]:
        assert rounds[0][k] == pytest.approx(history["rounds"][1][k], rel=1e-5)
    _leaves_equal(gen_full.params, gen_resumed.params)
    _leaves_equal(disc_full.params, disc_resumed.params)


def test_oracle_is_reported(model):
    """Test that the oracle callback lands in the round metrics."""
    config = dataclasses.replace(TINY, adversarial_rounds=1, disc_pretrain_steps=0)
    _, _, history = training.train(model, _pairs(), config, oracle=lambda params: 1.5)
    assert history["rounds"][0]["oracle_nll"] == 1.5
    assert history["disc_pretrain_loss"] == []


def test_checkpoint_errors(model, tmp_path):
    """Test missing, corrupt and foreign checkpoints."""
    gen_state, disc_state = training.create_train_states(
        model, jax.random.PRNGKey(0), TINY
    )
    with pytest.raises(errors.ConfigError):
        checkpoints.load_checkpoint(str(tmp_path / "missing"), gen_state, disc_state)
    bad = tmp_path / "bad.msgpack"
    bad.write_bytes(b"\xc1garbage")
    with pytest.raises(errors.ParseError):
        checkpoints.load_checkpoint(str(bad), gen_state, disc_state)
    with pytest.raises(errors.ConfigError):
        checkpoints.latest_checkpoint(str(tmp_path / "nowhere"))


def test_write_history_csv(tmp_path):
    """Test the per-round CSV."""
    path = tmp_path / "history.csv"
    training.write_history_csv([{"round": 0, "pg_loss": 1.25}], str(path))
    with open(path) as f:
        rows = list(csv.DictReader(f))
    assert rows == [dict({k: "" for k in training.HISTORY_FIELDS}, round="0", pg_loss="1.25")]
