"""Per-image attention export consumed by the interpretation analytics.

One JSON line per image: identity and split, per-region labels and
attention weights, the full graph-attention matrix when the graph stage
ran, and the predicted/ground-truth mean scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import dist_mean

__all__ = ["ImageAttention", "build_attention_log", "write_attention_log", "load_attention_log"]

LOG_FORMAT = "aesgraph-attention-log"
LOG_VERSION = 1

_ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class ImageAttention:
    """Attention record of one image."""

    image_id: str
    split: str
    category: str
    predicted_mean: float
    ground_truth_mean: float
    region_labels: tuple[str, ...]
    region_attributes: tuple[tuple[str, ...], ...]
    attention: np.ndarray                  # [L], entries in (0, 1)
    graph_attention: np.ndarray | None     # [L, L], rows sum to 1
    predicted_distribution: tuple[float, ...] | None = None

    def __post_init__(self):
        att = self.attention
        if att.ndim != 1 or len(self.region_labels) != att.size:
            raise ValueError(f"image {self.image_id}: attention/labels length mismatch")
        if not ((att > 0.0) & (att < 1.0)).all():
            raise ValueError(f"image {self.image_id}: attention weights must lie in (0, 1)")
        ga = self.graph_attention
        if ga is not None:
            if ga.shape != (att.size, att.size):
                raise ValueError(f"image {self.image_id}: graph attention shape {ga.shape}")
            if not (ga > 0.0).all() or np.abs(ga.sum(axis=1) - 1.0).max() > _ROW_SUM_TOL:
                raise ValueError(f"image {self.image_id}: graph attention rows must be positive and sum to 1")


def build_attention_log(records, distributions, attention, alpha=None) -> list[ImageAttention]:
    """Assemble log entries from records and eval-mode model outputs."""
    if attention is None:
        raise ValueError("attention export requires an attention-based model")
    entries = []
    for i, rec in enumerate(records):
        entries.append(ImageAttention(
            image_id=rec.id,
            split=rec.split,
            category=rec.semantic_category,
            predicted_mean=float(dist_mean(distributions[i])),
            ground_truth_mean=float(dist_mean(rec.distribution)),
            region_labels=tuple(r.category_label for r in rec.regions),
            region_attributes=tuple(r.attribute_labels for r in rec.regions),
            attention=np.asarray(attention[i], dtype=np.float64),
            graph_attention=None if alpha is None else np.asarray(alpha[i], dtype=np.float64),
            predicted_distribution=tuple(float(v) for v in distributions[i]),
        ))
    return entries


def write_attention_log(path, entries) -> None:
    lines = [json.dumps({"format": LOG_FORMAT, "version": LOG_VERSION},
                        sort_keys=True, separators=(",", ":"))]
    for e in entries:
        lines.append(json.dumps({
            "id": e.image_id,
            "split": e.split,
            "category": e.category,
            "pred_mean": e.predicted_mean,
            "gt_mean": e.ground_truth_mean,
            "pred_dist": list(e.predicted_distribution) if e.predicted_distribution is not None else None,
            "labels": list(e.region_labels),
            "attributes": [list(a) for a in e.region_attributes],
            "attention": [float(v) for v in e.attention],
            "graph_attention": None if e.graph_attention is None else
                               [[float(v) for v in row] for row in e.graph_attention],
        }, sort_keys=True, separators=(",", ":")))
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_attention_log(path) -> list[ImageAttention]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty attention log {path}")
    header = json.loads(lines[0])
    if header.get("format") != LOG_FORMAT:
        raise ValueError(f"unrecognized attention log format {header.get('format')!r}")
    if header.get("version") != LOG_VERSION:
        raise ValueError(f"unsupported attention log version {header.get('version')!r}")
    entries = []
    for line in lines[1:]:
        d = json.loads(line)
        entries.append(ImageAttention(
            image_id=d["id"],
            split=d["split"],
            category=d["category"],
            predicted_mean=float(d["pred_mean"]),
            ground_truth_mean=float(d["gt_mean"]),
            region_labels=tuple(d["labels"]),
            region_attributes=tuple(tuple(a) for a in d["attributes"]),
            attention=np.array(d["attention"], dtype=np.float64),
            graph_attention=None if d["graph_attention"] is None else
                            np.array(d["graph_attention"], dtype=np.float64),
            predicted_distribution=None if d["pred_dist"] is None else tuple(d["pred_dist"]),
        ))
    return entries
