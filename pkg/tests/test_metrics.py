"""Tests for report construction."""

import numpy as np
import pytest

from flowgan import errors, metrics
from flowgan.simulation import MidPriceSeries


def _walk(n, seed, scale=1e-3, df=None):
    rng = np.random.default_rng(seed)
    steps = rng.standard_t(df, size=n) if df else rng.normal(size=n)
    return MidPriceSeries(100.0 * np.exp(np.cumsum(scale * steps)), 60.0, 0.0, np.ones(n))


def test_horizon_label():
    """Test table row labels."""
    assert metrics.horizon_label(1) == "1 Hour"
    assert metrics.horizon_label(6) == "6 Hours"
    assert metrics.horizon_label(48.0) == "48 Hours"
    assert metrics.horizon_label(0.5) == "0.5 Hours"


def test_stats_config_validation():
    """Test invalid evaluation options."""
    with pytest.raises(errors.ConfigError):
        metrics.StatsConfig(horizons_hours=())
    with pytest.raises(errors.ConfigError):
        metrics.StatsConfig(ks_alpha=1.5)


def test_build_report_skips_long_horizons_and_flags_constant_paths():
    """Test table contents for a matching model and a frozen model."""
    real = _walk(400, 0)
    matching = [_walk(400, s) for s in range(1, 6)]
    frozen = [MidPriceSeries(np.full(400, 100.0), 60.0) for _ in range(5)]
    report = metrics.build_report(
        real, {"match": matching, "frozen": frozen}, metrics.StatsConfig()
    )
    assert report.horizons == ["1 Hour", "6 Hours"]
    assert report.models == ["match", "frozen"]
    assert report.path_counts == {"match": 5, "frozen": 5}
    for h in report.horizons:
        assert report.ks_rejections[h]["frozen"] == 5
        assert 0 <= report.ks_rejections[h]["match"] <= 5
        kurt = report.kurtosis[h]["frozen"]
        assert kurt == {"mean_kurtosis": None, "heavy_tail_rejections": 5, "degenerate": 5}
        vol = report.volatility_tests[h]["frozen"]["v_r"]
        assert vol["mean"] == 0.0 and vol["t_stat"] is None
        assert report.volatility_tests[h]["match"]["v_d"]["p_value"] is not None
    assert report.real_stats["1 Hour"]["tail_exponent"] is None
    assert report.tail_exponents["1 Hour"]["match"]["mean"] is None
    assert report.real_volatility["1 Hour"]["v_r"] > 0


def test_tail_exponents_with_long_series():
    """Test the tail table once enough returns are available."""
    real = _walk(2000, 0, df=3)
    paths = [_walk(2000, s, df=3) for s in range(1, 5)]
    report = metrics.build_report(
        real, {"model": paths}, metrics.StatsConfig(horizons_hours=(24,))
    )
    assert report.horizons == ["24 Hours"]
    assert report.real_stats["24 Hours"]["tail_exponent"] > 1
    cell = report.tail_exponents["24 Hours"]["model"]
    assert cell["mean"] > 1
    assert 0 <= cell["p_value"] <= 1


def test_build_report_is_deterministic():
    """Test that identical inputs give identical reports."""
    real = _walk(400, 0)
    paths = {"m": [_walk(400, s) for s in range(1, 4)]}
    config = metrics.StatsConfig(horizons_hours=(1,))
    a = metrics.build_report(real, paths, config, {"seed": 1}).to_dict()
    b = metrics.build_report(real, paths, config, {"seed": 1}).to_dict()
    assert a == b
    assert a["config"]["seed"] == 1


def test_build_report_errors():
    """Test empty inputs and horizons that fit nothing."""
    real = _walk(100, 0)
    with pytest.raises(errors.ConfigError):
        metrics.build_report(real, {}, metrics.StatsConfig())
    with pytest.raises(errors.ConfigError):
        metrics.build_report(real, {"m": []}, metrics.StatsConfig())
    with pytest.raises(errors.ConfigError):
        metrics.build_report(
            real, {"m": [_walk(100, 1)]}, metrics.StatsConfig(horizons_hours=(6,))
        )
