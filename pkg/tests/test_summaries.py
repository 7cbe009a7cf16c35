"""Tests for report rendering."""

import os

import numpy as np

from flowgan import metrics, summaries
from flowgan.simulation import MidPriceSeries


def _report():
    h = "1 Hour"
    vol_cell = {"mean": 0.002, "t_stat": 1.234, "p_value": 0.2222}
    return metrics.EvalReport(
        horizons=[h],
        models=["seqgan", "poisson"],
        path_counts={"seqgan": 100, "poisson": 100},
        ks_rejections={h: {"seqgan": 73, "poisson": 86}},
        real_stats={h: {"tail_exponent": 3.671, "kurtosis": 8.789, "jb_p_value": 1e-9}},
        kurtosis={
            h: {
                "seqgan": {"mean_kurtosis": 5.5, "heavy_tail_rejections": 97, "degenerate": 0},
                "poisson": {"mean_kurtosis": None, "heavy_tail_rejections": 100, "degenerate": 100},
            }
        },
        tail_exponents={
            h: {
                "seqgan": {"mean": 3.2, "t_stat": -2.5, "p_value": 0.0141},
                "poisson": {"mean": None, "t_stat": None, "p_value": None},
            }
        },
        real_volatility={h: {"v_r": 0.00177, "v_p": 0.00149, "v_d": 0.0308}},
        volatility_tests={
            h: {
                m: {k: dict(vol_cell) for k in ("v_r", "v_p", "v_d")}
                for m in ("seqgan", "poisson")
            }
        },
    )


def test_format_cell():
    """Test numeric formatting and missing values."""
    assert summaries.format_cell(None, ".2f") == "n/a"
    assert summaries.format_cell(np.int64(7), ".2f") == "7"
    assert summaries.format_cell(3.14159, ".2f") == "3.14"
    assert summaries.format_cell(0.000123456, ".3g") == "0.000123"


def test_table_rows():
    """Test the rendered rows of the main tables."""
    tables = summaries.report_tables(_report())
    render = summaries.render_row
    assert render(tables["ks_rejections"].rows[0]) == "1 Hour | 73 | 86"
    assert render(tables["real_stats"].rows[0]) == "1 Hour | 3.67 | 8.79 | 0.00"
    assert render(tables["real_volatility"].rows[0]) == "1 Hour | 0.00177 | 0.00149 | 0.0308"
    assert render(tables["kurtosis"].rows[0]) == "1 Hour | 5.50 | 97 | n/a | 100"
    assert render(tables["tail_exponents"].rows[0]) == (
        "1 Hour | 3.20 | -2.50 | 0.014 | n/a | n/a | n/a"
    )
    assert tables["volatility_tests"].rows[0][1:3] == ["1.23", "0.222"]
    assert len(tables["volatility_tests"].header) == 1 + 2 * 3 * 2


def test_render_text():
    """Test that every table appears with its title."""
    text = summaries.render_text(_report())
    for title in summaries.TABLE_TITLES.values():
        assert title in text
    assert "Horizon | seqgan | poisson" in text


def test_write_report_is_byte_stable(tmp_path):
    """Test CSV and JSON output and reloading."""
    a = summaries.write_report(_report(), str(tmp_path / "a"))
    b = summaries.write_report(_report(), str(tmp_path / "b"))
    assert [os.path.basename(p) for p in a] == [os.path.basename(p) for p in b]
    for pa, pb in zip(a, b):
        with open(pa, "rb") as fa, open(pb, "rb") as fb:
            assert fa.read() == fb.read()
    with open(tmp_path / "a" / "ks_rejections.csv") as f:
        assert f.read().splitlines() == ["Horizon,seqgan,poisson", "1 Hour,73,86"]
    loaded = summaries.load_report(str(tmp_path / "a"))
    assert loaded.to_dict() == _report().to_dict()


def test_plot_return_histograms(tmp_path):
    """Test that the SVG is written and reproducible."""
    rng = np.random.default_rng(0)
    real = MidPriceSeries(100 * np.exp(np.cumsum(1e-3 * rng.normal(size=120))), 60.0)
    paths = {"m": [MidPriceSeries(100 * np.exp(np.cumsum(1e-3 * rng.normal(size=120))), 60.0)]}
    first = tmp_path / "a.svg"
    second = tmp_path / "b.svg"
    summaries.plot_return_histograms(real, paths, 1, str(first))
    summaries.plot_return_histograms(real, paths, 1, str(second))
    assert first.read_bytes() == second.read_bytes()
    assert b"<svg" in first.read_bytes()
