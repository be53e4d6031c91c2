"""Static figures for the interpretation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["subject_gap_boxplot", "cross_split_scatter"]


def subject_gap_boxplot(log, subjects, path, category=None) -> None:
    """Boxplots of attention on subject labels vs all other regions."""
    subject_labels = {s.label for s in subjects}
    subject_att, other_att = [], []
    for e in log:
        if e.split != "train" or e.predicted_mean <= 5.0:
            continue
        if category is not None and e.category != category:
            continue
        for label, att in zip(e.region_labels, e.attention):
            (subject_att if label in subject_labels else other_att).append(float(att))
    fig, ax = plt.subplots(figsize=(4, 4))
    data = [subject_att or [0.0], other_att or [0.0]]
    ax.boxplot(data, tick_labels=["subjects", "others"])
    ax.set_ylabel("region attention")
    ax.set_title(category or "all categories")
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cross_split_scatter(table, path) -> None:
    """Train-vs-test correlation scatter with a least-squares fit line."""
    defined = [r for r in table.rows if r.defined]
    x = np.array([r.train_corr for r in defined])
    y = np.array([r.test_corr for r in defined])
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.scatter(x, y, s=12)
    if x.size >= 2 and np.ptp(x) > 0:
        slope, intercept = np.polyfit(x, y, 1)
        xs = np.linspace(x.min(), x.max(), 50)
        ax.plot(xs, slope * xs + intercept, color="tab:red", linewidth=1)
    ax.set_xlabel("train correlation")
    ax.set_ylabel("test correlation")
    ax.set_title(f"{table.label_kind} ({'pairs' if table.pairwise else 'labels'})")
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
