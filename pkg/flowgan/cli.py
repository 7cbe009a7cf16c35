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

"""Command-line pipeline: ingest, fit-benchmark, train, simulate, evaluate, report.

  flowgan ingest --config=run.toml
  flowgan fit-benchmark --config=run.toml
  flowgan train --config=run.toml --seed=1
  flowgan simulate --config=run.toml --seed=1 --model=all
  flowgan evaluate --config=run.toml
  flowgan report --config=run.toml --plot
"""

import dataclasses
import datetime
import json
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import gin
import jax
import numpy as np
from absl import app, flags, logging

from flowgan import (
    checkpoints,
    configs,
    datasets,
    errors,
    event_codec,
    metrics,
    models,
    poisson,
    preprocessors,
    simulation,
    summaries,
    training,
    vocabularies,
)
from flowgan.order_book import OrderBook, Side, synthetic_book

_CONFIG = flags.DEFINE_string("config", None, "Run config file (TOML or JSON).")
_GIN_FILES = flags.DEFINE_multi_string("gin_file", [], "Gin files with bindings.")
_GIN_BINDINGS = flags.DEFINE_multi_string("gin_bindings", [], "Individual gin bindings.")
_SEED = flags.DEFINE_integer("seed", None, "Master seed; required for train and simulate.")
_RUN_DIR = flags.DEFINE_string(
    "run_dir", None, "Run directory; defaults to the latest one for the config hash."
)
_RUN_ROOT = flags.DEFINE_string("run_root", None, "Directory holding run directories.")
_PATH_COUNT = flags.DEFINE_integer("path_count", None, "Simulated paths per model.")
_HORIZON_HOURS = flags.DEFINE_float("horizon_hours", None, "Simulated hours per path.")
_NUM_WORKERS = flags.DEFINE_integer("num_workers", None, "Simulation processes.")
_MODEL = flags.DEFINE_enum(
    "model", "all", ["all", "seqgan", "poisson"], "Model(s) to simulate."
)
_RESUME = flags.DEFINE_bool("resume", False, "Resume training from the last checkpoint.")
_PLOT = flags.DEFINE_bool("plot", False, "Also write SVG return histograms.")

MODEL_NAMES = ("seqgan", "poisson")
SUBCOMMANDS = ("ingest", "fit-benchmark", "train", "simulate", "evaluate", "report")
_SEEDED = ("train", "simulate")


@dataclasses.dataclass(frozen=True)
class RunPaths:
    """Artifact locations inside a run directory."""

    root: str

    def _join(self, *parts: str) -> str:
        return os.path.join(self.root, *parts)

    @property
    def manifest(self) -> str:
        return self._join("manifest.json")

    @property
    def ingest_dir(self) -> str:
        return self._join("ingest")

    @property
    def cache(self) -> str:
        return self._join("ingest", preprocessors.CACHE_FILENAME)

    @property
    def samplers(self) -> str:
        return self._join("ingest", preprocessors.SAMPLERS_FILENAME)

    @property
    def book(self) -> str:
        return self._join("ingest", "book.json")

    @property
    def real_series(self) -> str:
        return self._join("ingest", "real_series.csv")

    @property
    def rates(self) -> str:
        return self._join("benchmark", "rates.json")

    @property
    def train_dir(self) -> str:
        return self._join("train")

    @property
    def checkpoint_dir(self) -> str:
        return self._join("train", "checkpoints")

    @property
    def final_checkpoint(self) -> str:
        return self._join("train", "final.msgpack")

    def simulate_dir(self, model: str) -> str:
        return self._join("simulate", model)

    @property
    def evaluate_dir(self) -> str:
        return self._join("evaluate")

    @property
    def report_dir(self) -> str:
        return self._join("report")


def _write_json(path: str, obj: Any) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _read_json(path: str, what: str) -> Any:
    if not os.path.exists(path):
        raise errors.ConfigError(f"missing {what} ({path})")
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise errors.ParseError(f"unreadable {what}: {e.msg}", path) from e


def new_run_dir(config: configs.RunConfig, now: Optional[datetime.datetime] = None) -> str:
    now = now or datetime.datetime.now(datetime.timezone.utc)
    name = f"{configs.config_hash(config)}-{now.strftime('%Y%m%dT%H%M%SZ')}"
    path = os.path.join(config.run_root, name)
    os.makedirs(path, exist_ok=True)
    return path


def latest_run_dir(config: configs.RunConfig) -> str:
    prefix = configs.config_hash(config) + "-"
    if os.path.isdir(config.run_root):
        names = sorted(n for n in os.listdir(config.run_root) if n.startswith(prefix))
        if names:
            return os.path.join(config.run_root, names[-1])
    raise errors.ConfigError(
        f"no run directory for config hash {prefix[:-1]} under {config.run_root}; "
        "run ingest first or pass --run_dir"
    )


def _manifest_base(config: configs.RunConfig) -> Dict[str, Any]:
    return {
        "config_hash": configs.config_hash(config),
        "run_settings": configs.run_settings(config),
    }


def _vocab(config: configs.RunConfig) -> event_codec.Vocabulary:
    return vocabularies.build_vocabulary(config.vocab)


# Subcommands.


def _initial_book(
    book: OrderBook, events: Sequence[Any], config: configs.RunConfig
) -> Tuple[OrderBook, str]:
    if book.has_quotes():
        return book, "feed"
    depths = [v for side in Side for v in book.depth(side).values()]
    depth = float(np.median(depths)) if depths else float(np.median([e.volume for e in events]))
    prices = [e.price_ticks for e in events if e.price_ticks is not None]
    if not prices:
        raise errors.ConfigError("cannot place a synthetic book: no priced events")
    mid = int(np.median(prices))
    logging.warning("book at the end of training is one-sided; using a synthetic book")
    return (
        synthetic_book(config.vocab.max_relative_price, depth, mid, config.tick_size),
        "synthetic",
    )


def cmd_ingest(config: configs.RunConfig, run_dir: str) -> Dict[str, Any]:
    """Parses feeds, encodes the training window and fits the samplers.

    Writes the token cache, samplers, initial book, real test series (when a
    test window is configured) and a manifest into `run_dir/ingest`.
    """
    config.check_feeds_exist()
    paths = RunPaths(run_dir)
    vocab = _vocab(config)
    events = datasets.load_events(config.feed_config)
    window = config.train_window
    if window is None:
        before, train_events = [], events
    else:
        before = [e for e in events if e.timestamp < window.start]
        train_events = [e for e in events if e.timestamp in window]
    if len(train_events) < 2:
        raise errors.ConfigError(
            f"training window holds {len(train_events)} events; need at least 2"
        )
    _, book = vocabularies.encode_flow(before, OrderBook(config.tick_size), vocab)
    losses = vocabularies.EncodeLosses()
    tokens, end_book = vocabularies.encode_flow(train_events, book, vocab, losses)
    if losses.total:
        logging.warning(
            "encoding is lossy for %d training events: %s", losses.total, losses
        )
    cache = preprocessors.build_cache(train_events, tokens, config.slice_len, vocab)
    os.makedirs(paths.ingest_dir, exist_ok=True)
    cache_hash = cache.save(paths.cache)
    volume_sampler, time_sampler = preprocessors.fit_samplers(train_events)
    preprocessors.save_samplers(paths.samplers, volume_sampler, time_sampler)
    initial_book, book_source = _initial_book(end_book, train_events, config)
    _write_json(paths.book, initial_book.snapshot())

    manifest = _manifest_base(config)
    manifest.update(
        {
            "cache_sha256": cache_hash,
            "num_events": len(train_events),
            "num_pairs": len(tokens) // config.slice_len,
            "initial_book": book_source,
            "token_counts": {
                vocab.token_name(i): int(c)
                for i, c in enumerate(vocabularies.token_counts(tokens, vocab))
            },
            "encoding_losses": dataclasses.asdict(losses),
            "vocabulary": vocab.to_dict(),
        }
    )
    if config.test_window is not None:
        test_events = [e for e in events if e.timestamp < config.test_window.end]
        result = simulation.replay(test_events, OrderBook(config.tick_size))
        series = simulation.resample(
            result.trajectory,
            config.simulation.interval,
            config.test_window.duration,
            config.test_window.start,
        )
        series.to_csv(paths.real_series)
        manifest["real_series"] = {
            "length": len(series),
            "counters": result.counters.to_dict(),
        }
    _write_json(os.path.join(paths.ingest_dir, "manifest.json"), manifest)
    logging.info(
        "ingested %d events into %d pairs", len(train_events), manifest["num_pairs"]
    )
    return manifest


def cmd_fit_benchmark(config: configs.RunConfig, run_dir: str) -> poisson.PoissonRates:
    """Fits the multiple-Poisson benchmark on the cached training tokens."""
    paths = RunPaths(run_dir)
    cache = preprocessors.TokenCache.load(paths.cache)
    duration = (
        config.train_window.duration if config.train_window is not None else cache.duration
    )
    vocab = _vocab(config)
    rates = poisson.fit_rates(cache.tokens, duration, vocab.size)
    os.makedirs(os.path.dirname(paths.rates), exist_ok=True)
    with open(paths.rates, "w") as f:
        f.write(rates.to_json(vocab, _manifest_base(config)))
        f.write("\n")
    return rates


def _history_path(paths: RunPaths) -> str:
    return os.path.join(paths.train_dir, "history.json")


def cmd_train(
    config: configs.RunConfig, run_dir: str, resume: bool = False
) -> Dict[str, Any]:
    """Trains the SeqGAN; writes a checkpoint per round and the history."""
    paths = RunPaths(run_dir)
    cache = preprocessors.TokenCache.load(paths.cache)
    pairs = cache.pairs()
    if not pairs:
        raise errors.ConfigError(
            f"cache holds {len(cache.tokens)} tokens, fewer than one slice of "
            f"{cache.slice_len}"
        )
    model = models.SeqGan(config.model)
    train_config = config.train
    os.makedirs(paths.checkpoint_dir, exist_ok=True)

    def on_round_end(r, gen_state, disc_state):
        checkpoints.save_checkpoint(
            checkpoints.checkpoint_path(paths.checkpoint_dir, r),
            gen_state,
            disc_state,
            r,
            train_config.seed,
        )

    if resume:
        gen_template, disc_template = training.create_train_states(
            model, jax.random.PRNGKey(train_config.seed), train_config
        )
        gen_template = training.with_optimizer(
            gen_template, train_config.pg_learning_rate, train_config.clip_norm
        )
        gen_state, disc_state, info = checkpoints.load_checkpoint(
            checkpoints.latest_checkpoint(paths.checkpoint_dir),
            gen_template,
            disc_template,
        )
        if info["seed"] != train_config.seed:
            raise errors.ConfigError(
                f"checkpoint seed {info['seed']} != --seed {train_config.seed}"
            )
        history = _read_json(_history_path(paths), "training history")
        history["rounds"] = [row for row in history["rounds"] if row["round"] <= info["round"]]
        gen_state, disc_state, rounds = training.adversarial_train(
            model,
            gen_state,
            disc_state,
            pairs,
            train_config,
            training.adversarial_key(train_config),
            start_round=info["round"] + 1,
            on_round_end=on_round_end,
        )
        history["rounds"].extend(rounds)
    else:
        gen_state, disc_state, history = training.train(
            model, pairs, train_config, on_round_end=on_round_end
        )
    checkpoints.save_checkpoint(
        paths.final_checkpoint,
        gen_state,
        disc_state,
        train_config.adversarial_rounds - 1,
        train_config.seed,
    )
    history.update(_manifest_base(config))
    _write_json(_history_path(paths), history)
    training.write_history_csv(
        history["rounds"], os.path.join(paths.train_dir, "history.csv")
    )
    return history


def _load_generator(config: configs.RunConfig, paths: RunPaths):
    model = models.SeqGan(config.model)
    gen_template, disc_template = training.create_train_states(
        model, jax.random.PRNGKey(config.train.seed), config.train
    )
    gen_template = training.with_optimizer(
        gen_template, config.train.pg_learning_rate, config.train.clip_norm
    )
    gen_state, _, _ = checkpoints.load_checkpoint(
        paths.final_checkpoint, gen_template, disc_template
    )
    return gen_state.params


def cmd_simulate(
    config: configs.RunConfig, run_dir: str, model_names: Sequence[str] = MODEL_NAMES
) -> Dict[str, Any]:
    """Simulates mid-price paths for each model into run_dir/simulate/<model>."""
    paths = RunPaths(run_dir)
    vocab = _vocab(config)
    volume_sampler, time_sampler = preprocessors.load_samplers(paths.samplers)
    initial_book = OrderBook.from_snapshot(_read_json(paths.book, "initial book"))
    sim_config = config.simulation
    manifests = {}
    for name in model_names:
        if name == "poisson":
            if not os.path.exists(paths.rates):
                raise errors.ConfigError(f"missing {paths.rates}; run fit-benchmark first")
            with open(paths.rates) as f:
                rates, rates_vocab = poisson.PoissonRates.from_json(f.read())
            if rates_vocab != vocab:
                raise errors.ConfigError("benchmark rates use another vocabulary")
            flow_model = simulation.PoissonFlowModel(rates, vocab, volume_sampler)
        elif name == "seqgan":
            cache = preprocessors.TokenCache.load(paths.cache)
            starts, _ = preprocessors.pairs_to_arrays(cache.pairs())
            flow_model = simulation.SeqGanFlowModel(
                model_config=config.model,
                gen_params=_load_generator(config, paths),
                starts=starts,
                seq_len=config.train.seq_len,
                vocab=vocab,
                volume_sampler=volume_sampler,
                time_sampler=time_sampler,
            )
        else:
            raise errors.ConfigError(f"unknown model {name!r}")
        results = simulation.run_paths(flow_model, sim_config, initial_book)
        out_dir = paths.simulate_dir(name)
        os.makedirs(out_dir, exist_ok=True)
        for i, result in enumerate(results):
            result.series.to_csv(os.path.join(out_dir, f"path_{i:04d}.csv"))
        manifest = _manifest_base(config)
        manifest.update(
            {
                "model": name,
                "simulation": config.to_dict()["simulation"],
                "seeds": [list(r.seed) for r in results],
                "counters": [r.counters.to_dict() for r in results],
                "eta_policy": sim_config.eta_policy,
            }
        )
        _write_json(os.path.join(out_dir, "manifest.json"), manifest)
        manifests[name] = manifest
    return manifests


def _load_paths(paths: RunPaths) -> Dict[str, List[simulation.MidPriceSeries]]:
    model_paths = {}
    for name in MODEL_NAMES:
        directory = paths.simulate_dir(name)
        if not os.path.isdir(directory):
            continue
        files = sorted(f for f in os.listdir(directory) if f.endswith(".csv"))
        if files:
            model_paths[name] = [
                simulation.MidPriceSeries.from_csv(os.path.join(directory, f))
                for f in files
            ]
    if not model_paths:
        raise errors.ConfigError("no simulated series; run simulate first")
    return model_paths


def cmd_evaluate(config: configs.RunConfig, run_dir: str) -> metrics.EvalReport:
    """Builds the evaluation report and writes its CSV tables and JSON."""
    paths = RunPaths(run_dir)
    if not os.path.exists(paths.real_series):
        raise errors.ConfigError(
            "missing real series; configure a test_window and rerun ingest"
        )
    real = simulation.MidPriceSeries.from_csv(paths.real_series)
    report = metrics.build_report(
        real,
        _load_paths(paths),
        config.stats,
        extra_config={
            "config_hash": configs.config_hash(config),
            "max_relative_price": config.vocab.max_relative_price,
            "eta_policy": config.simulation.eta_policy,
        },
    )
    summaries.write_report(report, paths.evaluate_dir)
    return report


def cmd_report(config: configs.RunConfig, run_dir: str, plot: bool = False) -> str:
    """Renders the evaluated tables; optionally writes return histograms."""
    paths = RunPaths(run_dir)
    if not os.path.exists(os.path.join(paths.evaluate_dir, summaries.REPORT_JSON)):
        raise errors.ConfigError("missing evaluation report; run evaluate first")
    report = summaries.load_report(paths.evaluate_dir)
    text = summaries.render_text(report)
    if plot:
        real = simulation.MidPriceSeries.from_csv(paths.real_series)
        model_paths = _load_paths(paths)
        os.makedirs(paths.report_dir, exist_ok=True)
        for hours in config.stats.horizons_hours:
            label = metrics.horizon_label(hours)
            if label not in report.horizons:
                continue
            summaries.plot_return_histograms(
                real,
                model_paths,
                hours,
                os.path.join(paths.report_dir, f"returns_{label.replace(' ', '_')}.svg"),
            )
    return text


# Entry point.


def _overrides() -> Dict[str, Any]:
    return {
        "seed": _SEED.value,
        "run_root": _RUN_ROOT.value,
        "simulation.path_count": _PATH_COUNT.value,
        "simulation.horizon": (
            None if _HORIZON_HOURS.value is None else _HORIZON_HOURS.value * metrics.HOUR
        ),
        "simulation.num_workers": _NUM_WORKERS.value,
    }


def run(command: str) -> Any:
    if command in _SEEDED and _SEED.value is None:
        raise errors.ConfigError(f"--seed is required for {command}")
    gin.parse_config_files_and_bindings(_GIN_FILES.value, _GIN_BINDINGS.value)
    config = configs.load_run_config(_CONFIG.value, _overrides())
    if _RUN_DIR.value is not None:
        run_dir = _RUN_DIR.value
    elif command == "ingest":
        run_dir = new_run_dir(config)
    else:
        run_dir = latest_run_dir(config)
    logging.info("%s in %s (config %s)", command, run_dir, configs.config_hash(config))
    if command == "ingest":
        os.makedirs(run_dir, exist_ok=True)
        run_manifest = _manifest_base(config)
        run_manifest["config"] = config.to_dict()
        _write_json(RunPaths(run_dir).manifest, run_manifest)
        return cmd_ingest(config, run_dir)
    if command == "fit-benchmark":
        return cmd_fit_benchmark(config, run_dir)
    if command == "train":
        return cmd_train(config, run_dir, resume=_RESUME.value)
    if command == "simulate":
        names = MODEL_NAMES if _MODEL.value == "all" else (_MODEL.value,)
        return cmd_simulate(config, run_dir, names)
    if command == "evaluate":
        return cmd_evaluate(config, run_dir)
    text = cmd_report(config, run_dir, plot=_PLOT.value)
    print(text)
    return text


def _main(argv: Sequence[str]) -> None:
    if len(argv) != 2 or argv[1] not in SUBCOMMANDS:
        raise app.UsageError(
            f"expected one subcommand out of {', '.join(SUBCOMMANDS)}", exitcode=2
        )
    try:
        run(argv[1])
    except errors.FlowGanError as e:
        logging.error("%s failed: %s", argv[1], e)
        sys.exit(e.exit_code)


def main() -> None:
    app.run(_main)


if __name__ == "__main__":
    main()
