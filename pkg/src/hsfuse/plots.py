"""Figure rendering for sweep and loss CSVs.

Plots are cosmetic companions to the delimited output: the CSV stays the
canonical record, the PNG lands next to it.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["csv_kind", "render_sweep_plot", "render_loss_plot"]

_METRIC_LABEL = {"ergas": "ERGAS", "sam_deg": "SAM (degrees)", "ssim": "SSIM"}


def csv_kind(csv_path: str | Path) -> str:
    """Classify a CSV by header: 'sweep' results or a training 'loss' curve."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise ValueError(f"{csv_path}: empty CSV")
    if header[:2] == ["epoch", "mean_loss"]:
        return "loss"
    if header[:4] == ["sweep", "setting", "trial", "seed"]:
        return "sweep"
    raise ValueError(f"{csv_path}: unrecognized CSV header {header!r}")


def render_sweep_plot(csv_path: str | Path, metric: str, out_path: str | Path) -> Path:
    """Mean metric per setting with a +-1 std error bar over the trials."""
    if metric not in _METRIC_LABEL:
        raise ValueError(f"metric must be one of {sorted(_METRIC_LABEL)}, got {metric!r}")
    csv_path = Path(csv_path)
    groups: dict[str, list[float]] = {}
    kind = "sweep"
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["trial"] in ("mean", "std"):  # summary rows are recomputed here
                continue
            kind = row["sweep"]
            groups.setdefault(row["setting"], []).append(float(row[metric]))
    if not groups:
        raise ValueError(f"{csv_path}: no trial rows to plot")
    settings = list(groups)
    try:
        xs = [float(s) for s in settings]
        ticks = None
    except ValueError:
        xs = list(range(len(settings)))
        ticks = settings
    order = np.argsort(xs)
    xs = [xs[i] for i in order]
    settings = [settings[i] for i in order]
    if ticks is not None:
        ticks = settings
    means = [float(np.mean(groups[s])) for s in settings]
    stds = [float(np.std(groups[s])) for s in settings]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3, linewidth=1.2)
    if ticks is not None:
        ax.set_xticks(xs)
        ax.set_xticklabels(ticks)
    ax.set_xlabel(kind)
    ax.set_ylabel(_METRIC_LABEL[metric])
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_loss_plot(csv_path: str | Path, out_path: str | Path) -> Path:
    csv_path = Path(csv_path)
    epochs: list[float] = []
    losses: list[float] = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            epochs.append(float(row["epoch"]))
            losses.append(float(row["mean_loss"]))
    if not epochs:
        raise ValueError(f"{csv_path}: no loss rows to plot")
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(epochs, losses, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
