"""Tests for slicing, samplers and the token cache."""

import numpy as np
import pytest

from flowgan import errors, preprocessors
from flowgan.order_book import OrderEvent, OrderKind, Side


def test_slice_flow():
    """Test that 1000 tokens give 2 pairs of 200 and drop the remainder."""
    tokens = np.arange(1000) % 44
    pairs = preprocessors.slice_flow(tokens, slice_len=400)
    assert len(pairs) == 2
    assert all(p.seq_len == 200 for p in pairs)
    np.testing.assert_array_equal(pairs[0].start.tokens, tokens[:200])
    np.testing.assert_array_equal(pairs[0].real.tokens, tokens[200:400])
    np.testing.assert_array_equal(pairs[1].start.tokens, tokens[400:600])


def test_slice_flow_short_and_invalid():
    """Test short streams and bad slice lengths."""
    assert preprocessors.slice_flow(np.arange(399), slice_len=400) == []
    with pytest.raises(ValueError):
        preprocessors.slice_flow(np.arange(10), slice_len=5)


def test_pairs_arrays_round_trip():
    """Test stacking pairs into arrays and back."""
    pairs = preprocessors.slice_flow(np.arange(40) % 8, slice_len=10)
    starts, reals = preprocessors.pairs_to_arrays(pairs)
    assert starts.shape == reals.shape == (4, 5)
    again = preprocessors.arrays_to_pairs(starts, reals)
    np.testing.assert_array_equal(again[3].real.tokens, pairs[3].real.tokens)
    with pytest.raises(ValueError):
        preprocessors.pairs_to_arrays([])


def test_empirical_sampler_returns_observed_values():
    """Test the inverse CDF and its support."""
    sampler = preprocessors.fit_empirical([3.0, 1.0, 2.0, 2.0])
    assert sampler.inverse_cdf(0.0) == 1.0
    assert sampler.inverse_cdf(0.999) == 3.0
    draws = sampler.sample(np.random.default_rng(0), size=1000)
    assert set(np.unique(draws)) <= {1.0, 2.0, 3.0}
    assert sampler.median == 2.0
    assert isinstance(preprocessors.sample(sampler, np.random.default_rng(1)), float)


def test_empirical_sampler_distribution():
    """Test that draw frequencies match the sample."""
    sampler = preprocessors.fit_empirical([1.0] * 3 + [5.0])
    draws = sampler.sample(np.random.default_rng(7), size=40_000)
    assert np.mean(draws == 5.0) == pytest.approx(0.25, abs=0.01)


def test_empirical_sampler_rejects_bad_samples():
    """Test empty and non-positive samples."""
    with pytest.raises(errors.SamplerError):
        preprocessors.fit_empirical([])
    with pytest.raises(errors.SamplerError):
        preprocessors.fit_empirical([1.0, 0.0])


def test_fit_samplers_fills_zero_gaps(tmp_path):
    """Test pooled samplers and their persistence."""
    events = [
        OrderEvent(OrderKind.MARKET, Side.BID, v, t)
        for v, t in ((1.0, 0.0), (2.0, 0.0), (3.0, 1.5), (4.0, 2.0))
    ]
    volumes, gaps = preprocessors.fit_samplers(events)
    np.testing.assert_array_equal(volumes.values, [1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(gaps.values, [0.5, 0.5, 1.5])
    assert len(gaps) == len(events) - 1
    path = str(tmp_path / preprocessors.SAMPLERS_FILENAME)
    preprocessors.save_samplers(path, volumes, gaps)
    loaded_volumes, loaded_gaps = preprocessors.load_samplers(path)
    np.testing.assert_array_equal(loaded_volumes.values, volumes.values)
    np.testing.assert_array_equal(loaded_gaps.values, gaps.values)
    with pytest.raises(errors.SamplerError):
        preprocessors.fit_samplers(events[:1])
    with pytest.raises(errors.SamplerError):
        preprocessors.fit_samplers(events[:2])


def test_token_cache_round_trip(tmp_path):
    """Test saving and loading the cache with a stable hash."""
    cache = preprocessors.TokenCache(
        tokens=np.arange(20) % 8,
        timestamps=np.arange(20, dtype=float),
        volumes=np.ones(20),
        slice_len=10,
    )
    path = str(tmp_path / preprocessors.CACHE_FILENAME)
    digest = cache.save(path)
    loaded = preprocessors.TokenCache.load(path)
    assert loaded.content_hash() == digest
    assert loaded.slice_len == 10
    assert loaded.duration == 19.0
    assert len(loaded.pairs()) == 2
    assert cache.save(str(tmp_path / "again.npz")) == digest


def test_token_cache_errors(tmp_path):
    """Test missing and unreadable caches."""
    with pytest.raises(errors.ConfigError):
        preprocessors.TokenCache.load(str(tmp_path / "missing.npz"))
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip file")
    with pytest.raises(errors.ParseError):
        preprocessors.TokenCache.load(str(bad))
    with pytest.raises(ValueError):
        preprocessors.TokenCache(np.arange(3), np.arange(2), np.ones(3))
