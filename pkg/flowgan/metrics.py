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

"""Evaluation of simulated price paths against the real series."""

import dataclasses
from typing import Any, Dict, List, Mapping, Optional, Sequence

import gin
import numpy as np
from absl import logging

from flowgan import errors, metrics_utils
from flowgan.simulation import MidPriceSeries

HOUR = 3600.0


@gin.configurable
@dataclasses.dataclass(frozen=True)
class StatsConfig:
    """Evaluation options.

    Attributes:
      horizons_hours: leading horizons every table is computed for.
      ks_alpha: Hochberg level for the K-S comparisons.
      jb_alpha: Hochberg level for the Jarque-Bera normality tests.
      tail_fraction: share of order statistics used by the Hill estimator.
      min_tail_points: fewest tail points the Hill estimator accepts.
    """

    horizons_hours: Sequence[float] = (1, 6, 48)
    ks_alpha: float = 0.1
    jb_alpha: float = 0.01
    tail_fraction: float = 0.05
    min_tail_points: int = 20

    def __post_init__(self):
        if not self.horizons_hours or min(self.horizons_hours) <= 0:
            raise errors.ConfigError("horizons must be positive")
        for name in ("ks_alpha", "jb_alpha", "tail_fraction"):
            if not 0 < getattr(self, name) < 1:
                raise errors.ConfigError(f"{name} must lie in (0, 1)")
        object.__setattr__(self, "horizons_hours", tuple(self.horizons_hours))


def horizon_label(hours: float) -> str:
    value = int(hours) if float(hours).is_integer() else hours
    return f"{value} Hour" if value == 1 else f"{value} Hours"


@dataclasses.dataclass
class EvalReport:
    """Tables keyed by horizon label, then by model name.

    Attributes:
      horizons: evaluated horizon labels in order.
      models: model names in order.
      path_counts: number of paths per model.
      ks_rejections: Hochberg K-S rejection counts.
      real_stats: tail exponent, kurtosis and JB p-value of the real series.
      kurtosis: mean JB kurtosis, heavy-tail rejections and degenerate paths.
      tail_exponents: mean exponent and t-test against the real exponent.
      real_volatility: v_r, v_p, v_d of the real series.
      volatility_tests: per-measure mean and t-test against the real value.
      config: echo of the evaluation inputs.
    """

    horizons: List[str]
    models: List[str]
    path_counts: Dict[str, int]
    ks_rejections: Dict[str, Dict[str, int]]
    real_stats: Dict[str, Dict[str, Optional[float]]]
    kurtosis: Dict[str, Dict[str, Dict[str, Any]]]
    tail_exponents: Dict[str, Dict[str, Dict[str, Optional[float]]]]
    real_volatility: Dict[str, Dict[str, float]]
    volatility_tests: Dict[str, Dict[str, Dict[str, Dict[str, Optional[float]]]]]
    config: Dict[str, Any] = dataclasses.field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _returns(series: MidPriceSeries, horizon: float) -> np.ndarray:
    return metrics_utils.log_returns(series.head(horizon).values)


def _tail(abs_returns: np.ndarray, config: StatsConfig) -> Optional[float]:
    try:
        return metrics_utils.tail_exponent(
            abs_returns, config.tail_fraction, config.min_tail_points
        )
    except errors.DegenerateSampleError:
        return None


def _t_cell(samples: Sequence[float], mu0: Optional[float]) -> Dict[str, Optional[float]]:
    cell: Dict[str, Optional[float]] = {
        "mean": float(np.mean(samples)) if len(samples) else None,
        "t_stat": None,
        "p_value": None,
    }
    if mu0 is None:
        return cell
    try:
        result = metrics_utils.t_test_one_sample(samples, mu0)
    except errors.DegenerateSampleError:
        return cell
    cell["t_stat"] = result.statistic
    cell["p_value"] = result.p_value
    return cell


def _real_row(series: MidPriceSeries, horizon: float, config: StatsConfig):
    returns = _returns(series, horizon)
    abs_returns = np.abs(returns)
    row: Dict[str, Optional[float]] = {
        "tail_exponent": _tail(abs_returns, config),
        "kurtosis": None,
        "jb_p_value": None,
    }
    try:
        jb = metrics_utils.jarque_bera(abs_returns)
        row["kurtosis"] = jb.kurtosis
        row["jb_p_value"] = jb.p_value
    except errors.DegenerateSampleError:
        logging.warning("real series is degenerate over %s", horizon_label(horizon / HOUR))
    head = series.head(horizon)
    vol = metrics_utils.volatilities(head.values, int(head.trade_counts.sum()))
    return row, dataclasses.asdict(vol)


def _model_cells(
    real: MidPriceSeries,
    paths: Sequence[MidPriceSeries],
    horizon: float,
    real_row: Mapping[str, Optional[float]],
    real_vol: Mapping[str, float],
    config: StatsConfig,
):
    real_returns = _returns(real, horizon)
    ks_p = []
    jb_p = []
    kurtoses = []
    tails = []
    vols = {m: [] for m in metrics_utils.VOLATILITY_MEASURES}
    degenerate = 0
    for path in paths:
        returns = _returns(path, horizon)
        ks_p.append(metrics_utils.ks_two_sample(returns, real_returns).p_value)
        abs_returns = np.abs(returns)
        try:
            jb = metrics_utils.jarque_bera(abs_returns)
            jb_p.append(jb.p_value)
            kurtoses.append(jb.kurtosis)
        except errors.DegenerateSampleError:
            degenerate += 1
            jb_p.append(1.0)
        tail = _tail(abs_returns, config)
        if tail is not None:
            tails.append(tail)
        head = path.head(horizon)
        vol = metrics_utils.volatilities(head.values, int(head.trade_counts.sum()))
        for m in metrics_utils.VOLATILITY_MEASURES:
            vols[m].append(getattr(vol, m))
    ks_count = len(metrics_utils.hochberg(ks_p, config.ks_alpha))
    normal_rejected = len(metrics_utils.hochberg(jb_p, config.jb_alpha))
    kurt_cell = {
        "mean_kurtosis": float(np.mean(kurtoses)) if kurtoses else None,
        "heavy_tail_rejections": len(paths) - normal_rejected,
        "degenerate": degenerate,
    }
    tail_cell = _t_cell(tails, real_row["tail_exponent"]) if tails else _t_cell([], None)
    vol_cells = {m: _t_cell(vols[m], real_vol[m]) for m in metrics_utils.VOLATILITY_MEASURES}
    return ks_count, kurt_cell, tail_cell, vol_cells


def build_report(
    real: MidPriceSeries,
    model_paths: Mapping[str, Sequence[MidPriceSeries]],
    config: StatsConfig,
    extra_config: Optional[Mapping[str, Any]] = None,
) -> EvalReport:
    """Compares each model's paths with the real series over every horizon.

    Horizons longer than the real series or than any path are skipped with a
    warning.

    Args:
      real: real mid-price series.
      model_paths: model name -> simulated series, in path order.
      config: evaluation options.
      extra_config: echoed into the report.

    Returns:
      The evaluation report.
    """
    if not model_paths:
        raise errors.ConfigError("no simulated paths to evaluate")
    for name, paths in model_paths.items():
        if not paths:
            raise errors.ConfigError(f"model {name!r} has no paths")
    models = list(model_paths)
    report = EvalReport(
        horizons=[],
        models=models,
        path_counts={m: len(model_paths[m]) for m in models},
        ks_rejections={},
        real_stats={},
        kurtosis={},
        tail_exponents={},
        real_volatility={},
        volatility_tests={},
        config={"stats": dataclasses.asdict(config), **dict(extra_config or {})},
    )
    for hours in config.horizons_hours:
        horizon = hours * HOUR
        label = horizon_label(hours)
        shortest = min(len(p) for paths in model_paths.values() for p in paths)
        needed = int(np.ceil(horizon / real.interval))
        if needed > len(real) or needed > shortest or needed < 3:
            logging.warning("skipping %s: series too short", label)
            continue
        real_row, real_vol = _real_row(real, horizon, config)
        report.horizons.append(label)
        report.real_stats[label] = real_row
        report.real_volatility[label] = real_vol
        report.ks_rejections[label] = {}
        report.kurtosis[label] = {}
        report.tail_exponents[label] = {}
        report.volatility_tests[label] = {}
        for name in models:
            ks_count, kurt_cell, tail_cell, vol_cells = _model_cells(
                real, model_paths[name], horizon, real_row, real_vol, config
            )
            report.ks_rejections[label][name] = ks_count
            report.kurtosis[label][name] = kurt_cell
            report.tail_exponents[label][name] = tail_cell
            report.volatility_tests[label][name] = vol_cells
    if not report.horizons:
        raise errors.ConfigError("no horizon fits the available series")
    return report
