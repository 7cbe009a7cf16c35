"""End-to-end tests of the pipeline subcommands."""

import json
import os
import shutil

import numpy as np
import pytest
from absl import app, flags
from absl.testing import flagsaver

from flowgan import cli, configs, datasets, errors, event_codec, synthetic
from flowgan.order_book import OrderEvent, OrderKind, Side, synthetic_book

FLAGS = flags.FLAGS

VALUES = {
    "feeds": ["feed.ndjson"],
    "tick_size": 0.01,
    "slice_len": 8,
    "seed": 1,
    "train_window": {"start": 0, "end": 500},
    "test_window": {"start": 500, "end": 2300},
    "vocab": {"max_relative_price": 2},
    "model": {"emb_dim": 4, "hidden_dim": 8, "filter_widths": [2, 3], "num_filters": 4},
    "train": {
        "num_rollouts": 2,
        "batch_size": 8,
        "pretrain_epochs": 1,
        "disc_pretrain_steps": 1,
        "adversarial_rounds": 2,
        "d_steps": 1,
        "d_epochs": 1,
        "max_negatives": 16,
    },
    "simulation": {"horizon": 1800.0, "path_count": 2, "interval": 60.0},
    "stats": {"horizons_hours": [0.25, 0.5]},
}


def _write_feed(path):
    """Seeds a book at t = 0, then 2400 oracle-driven events."""
    vocab = event_codec.Vocabulary(2)
    oracle = synthetic.MarkovChainOracle.random(
        vocab.size, seed=0, mirror=synthetic.mirror_permutation(vocab)
    )
    rng = np.random.default_rng(0)
    book = synthetic_book(10, 50.0, 10000)
    seed_events = [
        OrderEvent(OrderKind.LIMIT, side, volume, 0.0, price)
        for side in Side
        for price, volume in book.depth(side).items()
    ]
    events, _ = synthetic.synthesize_events(
        oracle.sample(2400, rng), vocab, book, rng, mean_gap=1.0
    )
    datasets.write_ndjson(seed_events + events, str(path), 0.01)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    _write_feed(root / "feed.ndjson")
    config_path = root / "run.json"
    config_path.write_text(json.dumps(dict(VALUES, run_root=str(root / "runs"))))
    return root


def _config(workspace):
    return configs.load_run_config(str(workspace / "run.json"))


def _run_pipeline(config, run_dir):
    cli.cmd_ingest(config, run_dir)
    cli.cmd_fit_benchmark(config, run_dir)
    cli.cmd_train(config, run_dir)
    cli.cmd_simulate(config, run_dir)
    return cli.cmd_evaluate(config, run_dir)


@pytest.fixture(scope="module")
def pipeline(workspace):
    config = _config(workspace)
    run_dirs = [str(workspace / "first"), str(workspace / "second")]
    reports = [_run_pipeline(config, d) for d in run_dirs]
    return config, run_dirs, reports


def test_artifacts(pipeline):
    """Test that every stage leaves its artifacts."""
    config, (run_dir, _), (report, _) = pipeline
    paths = cli.RunPaths(run_dir)
    for path in (
        paths.cache,
        paths.samplers,
        paths.book,
        paths.real_series,
        paths.rates,
        paths.final_checkpoint,
        os.path.join(paths.train_dir, "history.csv"),
        os.path.join(paths.simulate_dir("seqgan"), "path_0001.csv"),
        os.path.join(paths.simulate_dir("poisson"), "manifest.json"),
    ):
        assert os.path.exists(path), path
    with open(os.path.join(paths.ingest_dir, "manifest.json")) as f:
        manifest = json.load(f)
    assert manifest["config_hash"] == configs.config_hash(config)
    assert manifest["num_pairs"] > 10
    assert sum(manifest["token_counts"].values()) == manifest["num_events"]
    losses = manifest["encoding_losses"]
    assert set(losses) >= {"marketable_limits", "out_of_band_cancels"}
    with open(paths.rates) as f:
        assert json.load(f)["config_hash"] == manifest["config_hash"]
    assert report.horizons == ["0.25 Hours", "0.5 Hours"]
    assert report.models == ["seqgan", "poisson"]
    assert report.path_counts == {"seqgan": 2, "poisson": 2}


def test_reports_are_byte_identical(pipeline):
    """Test that two runs of the same config give identical outputs."""
    _, (first, second), _ = pipeline
    for name in sorted(os.listdir(cli.RunPaths(first).evaluate_dir)):
        with open(os.path.join(cli.RunPaths(first).evaluate_dir, name), "rb") as a:
            with open(os.path.join(cli.RunPaths(second).evaluate_dir, name), "rb") as b:
                assert a.read() == b.read(), name
    for model in cli.MODEL_NAMES:
        a_dir = cli.RunPaths(first).simulate_dir(model)
        b_dir = cli.RunPaths(second).simulate_dir(model)
        with open(os.path.join(a_dir, "path_0000.csv"), "rb") as a:
            with open(os.path.join(b_dir, "path_0000.csv"), "rb") as b:
                assert a.read() == b.read()


def test_report_rendering(pipeline):
    """Test the text report and the optional plots."""
    config, (run_dir, _), _ = pipeline
    text = cli.cmd_report(config, run_dir, plot=True)
    assert "0.25 Hours" in text
    assert os.path.exists(
        os.path.join(cli.RunPaths(run_dir).report_dir, "returns_0.5_Hours.svg")
    )


def test_resume_reproduces_final_checkpoint(pipeline, workspace):
    """Test resuming after losing the last round's checkpoint."""
    config, (run_dir, _), _ = pipeline
    resumed_dir = str(workspace / "resumed")
    shutil.copytree(run_dir, resumed_dir)
    paths = cli.RunPaths(resumed_dir)
    os.remove(os.path.join(paths.checkpoint_dir, "round_00001.msgpack"))
    history = cli.cmd_train(config, resumed_dir, resume=True)
    assert [r["round"] for r in history["rounds"]] == [0, 1]
    with open(paths.final_checkpoint, "rb") as a:
        with open(cli.RunPaths(run_dir).final_checkpoint, "rb") as b:
            assert a.read() == b.read()


def test_missing_stage_outputs(workspace, tmp_path):
    """Test that stages report missing inputs as configuration errors."""
    config = _config(workspace)
    with pytest.raises(errors.ConfigError):
        cli.cmd_fit_benchmark(config, str(tmp_path))
    with pytest.raises(errors.ConfigError):
        cli.cmd_evaluate(config, str(tmp_path))
    with pytest.raises(errors.ConfigError):
        cli.cmd_report(config, str(tmp_path))


def test_stages_share_a_run_dir_across_seed_flags(workspace, tmp_path):
    """Test ingest without --seed, then seeded stages, through the flag surface."""
    FLAGS.mark_as_parsed()
    values = {k: v for k, v in VALUES.items() if k != "seed"}
    values["feeds"] = [str(workspace / "feed.ndjson")]
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps(values))
    run_root = str(tmp_path / "runs")
    with flagsaver.flagsaver(config=str(config_path), run_root=run_root, seed=None):
        cli.run("ingest")
        cli.run("fit-benchmark")
    (name,) = os.listdir(run_root)
    config = configs.load_run_config(str(config_path), {"run_root": run_root})
    assert name.startswith(configs.config_hash(config) + "-")
    with flagsaver.flagsaver(config=str(config_path), run_root=run_root, seed=1):
        cli.run("train")
    with flagsaver.flagsaver(
        config=str(config_path), run_root=run_root, seed=1, path_count=1
    ):
        manifests = cli.run("simulate")
    assert os.listdir(run_root) == [name]
    paths = cli.RunPaths(os.path.join(run_root, name))
    assert os.path.exists(paths.final_checkpoint)
    with open(os.path.join(paths.ingest_dir, "manifest.json")) as f:
        assert json.load(f)["run_settings"]["seed"] == 0
    for model in cli.MODEL_NAMES:
        settings = manifests[model]["run_settings"]
        assert settings["seed"] == 1
        assert settings["simulation.path_count"] == 1
        files = [f for f in os.listdir(paths.simulate_dir(model)) if f.endswith(".csv")]
        assert files == ["path_0000.csv"]


def test_seed_is_required():
    """Test the exit code when train runs without --seed."""
    FLAGS.mark_as_parsed()
    with flagsaver.flagsaver(seed=None):
        with pytest.raises(errors.ConfigError):
            cli.run("train")
        with pytest.raises(SystemExit) as info:
            cli._main(["flowgan", "simulate"])
        assert info.value.code == errors.ConfigError.exit_code
    with pytest.raises(app.UsageError):
        cli._main(["flowgan", "bogus"])
