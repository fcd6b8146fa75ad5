"""Matplotlib figures written next to the delimited reports."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.stats import norm  # noqa: E402

from .distributions import TupleDistribution, ranked_view  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def figsize(width=6.0, height=None):
    golden = (math.sqrt(5) - 1.0) / 2.0
    return width, height if height is not None else width * golden


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_matrix(matrix, path, title: str | None = None) -> Path:
    """Heatmap of rho per pair and tuple length, cells annotated ``rho|n``."""
    rho = matrix.rho_array()
    rows, cols = matrix.shape
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(1.2 + 0.9 * cols, 0.8 + 0.35 * max(rows, 1)))
        im = ax.imshow(np.ma.masked_invalid(rho), cmap="RdBu_r", vmin=-1, vmax=1, aspect="auto")
        ax.set_xticks(range(cols), [str(c) for c in matrix.columns])
        ax.set_yticks(range(rows), matrix.row_labels)
        ax.set_xlabel("tuple length (days)")
        for i, row in enumerate(matrix.cells):
            for j, cell in enumerate(row):
                ax.text(j, i, cell.cell(), ha="center", va="center", fontsize=6)
        fig.colorbar(im, ax=ax, label="Spearman rho")
        ax.set_title(title or matrix.comparison)
        return _save(fig, path)


def plot_ranked(dist: TupleDistribution, path, top: int = 32) -> Path:
    """Bar chart of the most frequent tuples in rank order."""
    entries = ranked_view(dist).entries[:top]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(max(4.0, 0.25 * len(entries) + 1.5)))
        ax.bar(range(len(entries)), [p for _, p in entries], color="0.3")
        ax.set_xticks(range(len(entries)), [t for t, _ in entries], rotation=90, family="monospace")
        ax.set_ylabel("probability")
        ax.set_title(f"{dist.tuple_length}-tuples, {dist.source_label or 'distribution'}")
        return _save(fig, path)


def plot_rule90(rows: np.ndarray, series: np.ndarray, path) -> Path:
    """Space-time diagram beside the cumulative black-minus-white series."""
    with plt.rc_context(STYLE):
        fig, (left, right) = plt.subplots(1, 2, figsize=figsize(7.0, 3.5))
        left.imshow(rows, cmap="Greys", interpolation="nearest", aspect="auto")
        left.set_xlabel("cell")
        left.set_ylabel("step")
        left.set_title("rule 90")
        right.plot(np.arange(1, len(series) + 1), series, lw=1, color="k")
        right.set_xlabel("step")
        right.set_ylabel("cumulative black - white")
        return _save(fig, path)


def plot_tail(changes, report, path) -> Path:
    """Histogram of changes with the fitted normal and the excess bins marked."""
    x = np.asarray(changes, dtype=float)
    w = report.bin_width
    k = np.floor(x / w + 0.5).astype(int)
    ks = np.arange(k.min(), k.max() + 1)
    observed = np.bincount(k - k.min(), minlength=len(ks))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        ax.bar(ks * w, observed, width=w, color="0.75", label="observed")
        grid = np.linspace(ks[0] * w, ks[-1] * w, 400)
        ax.plot(grid, len(x) * w * norm.pdf(grid, report.fitted_mean, report.fitted_std),
                color="k", lw=1, label="fitted normal")
        if report.tail_bins:
            ax.bar([b.center for b in report.tail_bins], [b.excess for b in report.tail_bins],
                   width=w, color="tab:red", label="excess")
        ax.set_yscale("symlog", linthresh=1)
        ax.set_xlabel("price change")
        ax.set_ylabel("count")
        ax.legend(frameon=False)
        return _save(fig, path)
