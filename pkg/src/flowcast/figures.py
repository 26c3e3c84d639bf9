"""Figure rendering for the report path.

Each report CSV gets a companion PNG: per-site MPE bars, a day-by-time MPE
heatmap, and observed-versus-predicted traces for the busiest sites.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .frames import WEEKDAY_NAMES, CountFrame
from .metrics import ComparisonTable, MpeReport


def mpe_by_site_figure(report: MpeReport, path: str | Path) -> None:
    sites = sorted(report.by_site)
    values = [report.by_site[s] for s in sites]
    fig, ax = plt.subplots(figsize=(max(6, len(sites) * 0.25), 4))
    ax.bar(sites, values, color="tab:blue")
    ax.axhline(report.overall, color="tab:red", linestyle="--", linewidth=1,
               label=f"overall {report.overall:.2f}")
    ax.set_xlabel("Site ID")
    ax.set_ylabel("MPE (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def mpe_by_day_time_figure(report: MpeReport, path: str | Path) -> None:
    days = [d for d in WEEKDAY_NAMES if any(day == d for day, _ in report.by_day_time)]
    bins = sorted({t for _, t in report.by_day_time})
    grid = np.full((len(days), len(bins)), np.nan)
    for (day, t), v in report.by_day_time.items():
        grid[days.index(day), bins.index(t)] = v
    fig, ax = plt.subplots(figsize=(8, 0.6 * len(days) + 2))
    im = ax.imshow(grid, aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(bins)), [str(t) for t in bins])
    ax.set_yticks(range(len(days)), days)
    ax.set_xlabel("Time bin")
    fig.colorbar(im, ax=ax, label="MPE (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def observed_vs_predicted_figure(
    frame: CountFrame, predictions: CountFrame, path: str | Path, max_sites: int = 4
) -> None:
    """Traces of observed and predicted counts for the busiest predicted sites."""
    pred_index = predictions.key_index()
    frame_index = frame.key_index()
    totals: dict[int, float] = {}
    for (d, t, s), i in pred_index.items():
        v = predictions.values[i]
        if np.isfinite(v):
            totals[s] = totals.get(s, 0.0) + v
    chosen = [s for s, _ in sorted(totals.items(), key=lambda kv: -kv[1])[:max_sites]]
    if not chosen:
        return
    fig, axes = plt.subplots(len(chosen), 1, figsize=(9, 2.4 * len(chosen)), sharex=True)
    if len(chosen) == 1:
        axes = [axes]
    for ax, site in zip(axes, chosen):
        keys = sorted((k for k in pred_index if k[2] == site), key=lambda k: (k[0], k[1]))
        xs = range(len(keys))
        obs = [frame.values[frame_index[k]] if k in frame_index else np.nan for k in keys]
        pred = [predictions.values[pred_index[k]] for k in keys]
        ax.plot(xs, obs, label="observed", color="tab:gray", marker=".", linewidth=1)
        ax.plot(xs, pred, label="predicted", color="tab:orange", linewidth=1.2)
        ax.set_ylabel(f"site {site}")
    axes[0].legend(loc="upper right")
    axes[-1].set_xlabel("prediction cell (date, bin order)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def comparison_figure(table: ComparisonTable, path: str | Path) -> None:
    """Observed vs model vs history-mean for the comparison rows."""
    rows = [r for r in table.rows if np.isfinite(r.actual)]
    if not rows:
        return
    xs = range(len(rows))
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(xs, [r.actual for r in rows], label="observed", color="tab:gray", marker=".")
    ax.plot(xs, [r.pred for r in rows], label="model", color="tab:orange")
    ax.plot(xs, [r.mean for r in rows], label="history mean", color="tab:green")
    ax.set_xlabel("cell")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
