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

"""Rendering of evaluation reports as text, CSV, JSON and SVG."""

import csv
import dataclasses
import json
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # pylint: disable=g-import-not-at-top
import numpy as np

from flowgan import metrics, metrics_utils
from flowgan.simulation import MidPriceSeries

REPORT_JSON = "report.json"

TABLE_TITLES = {
    "ks_rejections": "K-S rejections (Hochberg)",
    "real_stats": "Real series: tail exponent, kurtosis, JB p-value",
    "kurtosis": "Mean kurtosis and heavy-tail rejections",
    "tail_exponents": "Tail exponents vs real",
    "real_volatility": "Real series volatility",
    "volatility_tests": "Volatility t-tests vs real",
}


@dataclasses.dataclass(frozen=True)
class Table:
    header: List[str]
    rows: List[List[str]]


def format_cell(value: Any, fmt: str) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), fmt)


def render_row(cells: Sequence[str]) -> str:
    return " | ".join(cells)


def ks_rejection_table(report: metrics.EvalReport) -> Table:
    rows = [
        [h] + [format_cell(report.ks_rejections[h][m], "d") for m in report.models]
        for h in report.horizons
    ]
    return Table(["Horizon"] + list(report.models), rows)


def real_stats_table(report: metrics.EvalReport) -> Table:
    keys = ("tail_exponent", "kurtosis", "jb_p_value")
    rows = [
        [h] + [format_cell(report.real_stats[h][k], ".2f") for k in keys]
        for h in report.horizons
    ]
    return Table(["Horizon", "Tail exponent", "Kurtosis", "JB p-value"], rows)


def kurtosis_table(report: metrics.EvalReport) -> Table:
    header = ["Horizon"]
    for m in report.models:
        header += [f"{m} kurtosis", f"{m} rejections"]
    rows = []
    for h in report.horizons:
        row = [h]
        for m in report.models:
            cell = report.kurtosis[h][m]
            row += [
                format_cell(cell["mean_kurtosis"], ".2f"),
                format_cell(cell["heavy_tail_rejections"], "d"),
            ]
        rows.append(row)
    return Table(header, rows)


def tail_exponent_table(report: metrics.EvalReport) -> Table:
    header = ["Horizon"]
    for m in report.models:
        header += [f"{m} mean", f"{m} t", f"{m} p"]
    rows = []
    for h in report.horizons:
        row = [h]
        for m in report.models:
            cell = report.tail_exponents[h][m]
            row += [
                format_cell(cell["mean"], ".2f"),
                format_cell(cell["t_stat"], ".2f"),
                format_cell(cell["p_value"], ".3f"),
            ]
        rows.append(row)
    return Table(header, rows)


def real_volatility_table(report: metrics.EvalReport) -> Table:
    rows = [
        [h]
        + [
            format_cell(report.real_volatility[h][k], ".3g")
            for k in metrics_utils.VOLATILITY_MEASURES
        ]
        for h in report.horizons
    ]
    return Table(["Horizon"] + list(metrics_utils.VOLATILITY_MEASURES), rows)


def volatility_test_table(report: metrics.EvalReport) -> Table:
    header = ["Horizon"]
    for m in report.models:
        for k in metrics_utils.VOLATILITY_MEASURES:
            header += [f"{m} {k} t", f"{m} {k} p"]
    rows = []
    for h in report.horizons:
        row = [h]
        for m in report.models:
            for k in metrics_utils.VOLATILITY_MEASURES:
                cell = report.volatility_tests[h][m][k]
                row += [
                    format_cell(cell["t_stat"], ".2f"),
                    format_cell(cell["p_value"], ".3f"),
                ]
        rows.append(row)
    return Table(header, rows)


def report_tables(report: metrics.EvalReport) -> Dict[str, Table]:
    return {
        "ks_rejections": ks_rejection_table(report),
        "real_stats": real_stats_table(report),
        "kurtosis": kurtosis_table(report),
        "tail_exponents": tail_exponent_table(report),
        "real_volatility": real_volatility_table(report),
        "volatility_tests": volatility_test_table(report),
    }


def render_text(report: metrics.EvalReport) -> str:
    lines = []
    for name, table in report_tables(report).items():
        lines.append(TABLE_TITLES[name])
        lines.append(render_row(table.header))
        lines.extend(render_row(row) for row in table.rows)
        lines.append("")
    return "\n".join(lines)


def write_report(report: metrics.EvalReport, directory: str) -> List[str]:
    """Writes one CSV per table plus the combined JSON.

    Returns:
      Written paths. Contents depend only on the report, so identical
      reports give byte-identical files.
    """
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, table in report_tables(report).items():
        path = os.path.join(directory, f"{name}.csv")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(table.header)
            writer.writerows(table.rows)
        paths.append(path)
    path = os.path.join(directory, REPORT_JSON)
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    paths.append(path)
    return paths


def load_report(directory: str) -> metrics.EvalReport:
    with open(os.path.join(directory, REPORT_JSON)) as f:
        return metrics.EvalReport(**json.load(f))


def plot_return_histograms(
    real: MidPriceSeries,
    model_paths: Mapping[str, Sequence[MidPriceSeries]],
    horizon_hours: float,
    save_path: str,
    bins: int = 50,
) -> None:
    """Histograms of pooled log-returns per model against the real series."""
    horizon = horizon_hours * metrics.HOUR
    plt.rcParams["svg.hashsalt"] = "flowgan"
    fig, ax = plt.subplots(figsize=(8, 4))
    real_returns = metrics_utils.log_returns(real.head(horizon).values)
    ax.hist(real_returns, bins=bins, density=True, histtype="step", label="real")
    for name, paths in model_paths.items():
        pooled = np.concatenate(
            [metrics_utils.log_returns(p.head(horizon).values) for p in paths]
        )
        ax.hist(pooled, bins=bins, density=True, histtype="step", label=name)
    ax.set_yscale("log")
    ax.set_xlabel("1-minute log-return")
    ax.set_title(metrics.horizon_label(horizon_hours))
    ax.legend()
    fig.savefig(save_path, format="svg", metadata={"Date": None})
    plt.close(fig)
