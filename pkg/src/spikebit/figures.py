"""Figure rendering for the report path: training curves, encoder
comparison bars, and spike raster inspection plots, all written to files
next to the delimited output."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .encoders import SpikeTrain
from .harness import ComparisonTable, MetricsRecord


def save_training_curves(records: Sequence[MetricsRecord], path: str) -> None:
    """Loss and top-1 accuracy per epoch, train vs validation."""
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    for split, style in (("train", "-o"), ("val", "-s")):
        rows = [r for r in records if r.split == split]
        if not rows:
            continue
        epochs = [r.epoch for r in rows]
        ax_loss.plot(epochs, [r.loss for r in rows], style, label=split, markersize=4)
        ax_acc.plot(epochs, [r.top1 for r in rows], style, label=split, markersize=4)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("cross-entropy loss")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("top-1 accuracy")
    ax_acc.set_ylim(0.0, 1.02)
    for ax in (ax_loss, ax_acc):
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_comparison_chart(table: ComparisonTable, path: str) -> None:
    """Bar chart of final validation top-1 per coding method."""
    fig, ax = plt.subplots(figsize=(1.4 * len(table.encoders) + 2, 3.5))
    values = [table.top1[e] for e in table.encoders]
    bars = ax.bar(table.encoders, values, color="tab:blue")
    for enc, bar in zip(table.encoders, bars):
        if enc == table.best:
            bar.set_color("tab:green")
        elif enc == table.second:
            bar.set_color("tab:olive")
        label = f"{table.top1[enc]:.3f}"
        if enc in table.deltas:
            label += f"\n({table.deltas[enc]:+.3f})"
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(), label,
                ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("final val top-1")
    ax.set_ylim(0.0, 1.1)
    ax.set_title(f"{table.dataset} ({table.arch})")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_spike_raster(train: SpikeTrain, path: str, sample: int = 0) -> None:
    """Raster of one sample's spikes: time on x, flattened units on y."""
    spikes = train.spikes.data[:, sample]
    t_total = spikes.shape[0]
    flat = spikes.reshape(t_total, -1)
    times, units = np.nonzero(flat)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(times, units, s=1, marker="|", color="black")
    ax.set_xlabel("timestep")
    ax.set_ylabel("unit (flattened C*H*W)")
    ax.set_xlim(-0.5, t_total - 0.5)
    ax.set_title(f"{train.encoding_tag}, T={train.t_total}, sample {sample}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
