"""SVG figures for prediction windows and effect-rate bar charts.

Figures are written with a fixed hash salt and no date metadata so that
reruns produce identical files.  Text is kept as SVG ``<text>`` and each
bar carries an ``id`` of the form ``<series>:<region>``.
"""
from __future__ import annotations

import datetime as dt
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SVG_RC = {
    "svg.hashsalt": "esirpolicy",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

# (series key, legend label, colour), legend order of the bar chart
BAR_SERIES = (
    ("total_mask", "total policy effective rate (mask)", "tab:blue"),
    ("total_vaccine", "total policy effective rate (vaccine)", "tab:orange"),
    ("max_mask", "max policy effective rate (mask)", "tab:grey"),
    ("max_vaccine", "max policy effective rate (vaccine)", "gold"),
)


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def prediction_figure(path, title: str, actual_dates: Sequence[dt.date], actual_i,
                      pred_dates: Sequence[dt.date], median_i, lower_i, upper_i,
                      credible_level: float) -> None:
    """Actual versus predicted infected proportion over a prediction window."""
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        ax.fill_between(pred_dates, lower_i, upper_i, color="tab:red", alpha=0.2, linewidth=0,
                        label=f"{int(round(credible_level * 100))}% credible band", gid="band")
        ax.plot(actual_dates, actual_i, linestyle=":", marker=".", markersize=3, color="tab:green",
                label="actual", gid="actual")
        ax.plot(pred_dates, median_i, color="tab:red", label="predicted (median)", gid="median")
        ax.axvline(pred_dates[0], color="tab:blue", linewidth=1, gid="first_prediction")
        ax.axvline(pred_dates[-1], color="tab:green", linewidth=1, gid="last_prediction")
        ax.set_xlabel("date")
        ax.set_ylabel("infected proportion")
        ax.set_title(title)
        ax.xaxis.set_major_formatter(mdates.DateFormatter("%m/%d/%y"))
        fig.autofmt_xdate()
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def effect_bar_figure(path, regions: Sequence[str], values: dict[str, Sequence[float]]) -> None:
    """Grouped bars, four per region; ``values`` maps series key to per-region heights.

    Missing values (NaN) are drawn as zero-height bars so every region keeps
    all four series.
    """
    n = len(regions)
    x = np.arange(n)
    width = 0.2
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * n + 2.0), 4.0))
        for k, (key, label, colour) in enumerate(BAR_SERIES):
            heights = np.nan_to_num(np.asarray(values.get(key, [np.nan] * n), dtype=float))
            bars = ax.bar(x + (k - 1.5) * width, heights, width, color=colour, label=label, gid=key)
            for bar, region in zip(bars, regions):
                bar.set_gid(f"{key}:{region}")
        ax.axhline(0.0, color="black", linewidth=0.5)
        ax.set_xticks(x)
        ax.set_xticklabels(regions, rotation=90 if n > 12 else 0)
        ax.set_xlabel("region")
        ax.set_ylabel("policy effective rate")
        ax.legend(loc="best", frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)
