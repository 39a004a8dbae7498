"""Render evaluation reports as figures.

The evaluation CLI writes plot-ready CSV tables; this module turns the same
summaries into PNG files next to them: a log-density scatter of prediction
versus label and boxplots of the signed error per 10 m label bin.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import BinStats, ScatterSummary


def save_scatter_figure(summary: ScatterSummary, path) -> None:
    """Prediction-vs-label density on a log color scale, with the 1:1 line."""
    fig, ax = plt.subplots(figsize=(5, 4.5))
    counts = summary.counts.T   # label on x, prediction on y
    masked = np.ma.masked_equal(counts, 0)
    extent = (summary.edges[0], summary.edges[-1], summary.edges[0], summary.edges[-1])
    with np.errstate(divide="ignore"):
        density = np.log10(masked)
    image = ax.imshow(density, origin="lower", extent=extent, cmap="magma", aspect="equal")
    ax.plot(extent[:2], extent[:2], color="0.6", linewidth=0.8, linestyle="--")
    ax.set_xlabel("ground-truth height [m]")
    ax.set_ylabel("estimated height [m]")
    ax.set_title(f"$R^2$ = {summary.r2:.2f}" if np.isfinite(summary.r2) else "$R^2$ undefined")
    fig.colorbar(image, ax=ax, label="log10 count")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_bins_figure(bins: list[BinStats], path) -> None:
    """Signed-error boxplots per label bin (whiskers at 1.5 IQR)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    stats = []
    for b in bins:
        if b.count == 0:
            continue
        stats.append(
            {
                "label": f"{b.lo:.0f}-{b.hi:.0f}\n(n={b.count})",
                "med": b.median_error,
                "q1": b.q1,
                "q3": b.q3,
                "whislo": b.whisker_low,
                "whishi": b.whisker_high,
                "mean": b.mean_error,
                "fliers": [],
            }
        )
    if stats:
        ax.bxp(stats, showmeans=True, meanline=True)
    ax.axhline(0.0, color="0.6", linewidth=0.8)
    ax.set_xlabel("ground-truth height bin [m]")
    ax.set_ylabel("error (estimate - truth) [m]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_report_figures(
    summary: ScatterSummary | None, bins: list[BinStats] | None, out_dir
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if summary is not None:
        p = out / "scatter.png"
        save_scatter_figure(summary, p)
        written.append(p)
    if bins is not None:
        p = out / "error_bins.png"
        save_bins_figure(bins, p)
        written.append(p)
    return written
