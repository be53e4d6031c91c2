"""Interpretation analytics over attention logs.

Summarizes what the trained model attends to: which object labels act
as subjects of high-scoring images, how per-label attention intensities
correlate with image scores on each split, the same analysis for
graph-attention intensities of label pairs, and whether per-label
effects transfer from the train split to the test split.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention_log import ImageAttention
from .metrics import plcc

__all__ = [
    "SubjectResult",
    "CorrRow",
    "CorrelationTable",
    "discover_subjects",
    "attention_score_correlation",
    "pair_attention_correlation",
    "cross_split_correlation",
]

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.04
DEFAULT_TOP_K = 50


def _image_score(entry: ImageAttention, score_source: str) -> float:
    if score_source == "predicted":
        return entry.predicted_mean
    if score_source == "ground_truth":
        return entry.ground_truth_mean
    raise ValueError(f"score_source must be 'predicted' or 'ground_truth', got {score_source!r}")


@dataclass(frozen=True)
class SubjectResult:
    """One discovered subject label and its attention margin."""

    label: str
    delta: float          # mean attention on the label minus mean on all others
    subject_count: int
    other_count: int


def discover_subjects(log, category: str | None = None, margin: float = DEFAULT_MARGIN,
                      score_source: str = "predicted") -> list[SubjectResult]:
    """Labels whose mean attention beats all other regions by ``margin``.

    Only train-split images with a predicted mean score above 5 (the
    high-aesthetic side) qualify; ``category`` restricts to one image
    category, None uses every category.  Returns subjects sorted by
    descending margin; raising the margin can only shrink the list.
    """
    qualifying = [
        e for e in log
        if e.split == "train" and e.predicted_mean > 5.0
        and (category is None or e.category == category)
    ]
    if not qualifying:
        logger.warning("discover_subjects: no qualifying train images with score > 5%s",
                       f" in category {category!r}" if category else "")
        return []

    by_label: dict[str, list[float]] = defaultdict(list)
    for e in qualifying:
        for label, att in zip(e.region_labels, e.attention):
            by_label[label].append(float(att))
    totals = {label: (sum(v), len(v)) for label, v in by_label.items()}
    grand_sum = sum(s for s, _ in totals.values())
    grand_count = sum(c for _, c in totals.values())

    results = []
    for label in sorted(totals):
        s, c = totals[label]
        other_count = grand_count - c
        if other_count == 0:
            continue
        delta = s / c - (grand_sum - s) / other_count
        if delta >= margin:
            results.append(SubjectResult(label=label, delta=delta,
                                         subject_count=c, other_count=other_count))
    results.sort(key=lambda r: (-r.delta, r.label))
    return results


@dataclass(frozen=True)
class CorrRow:
    """Per-label (or label-pair) attention/score correlations by split.

    Correlations are None when a split has too few occurrences or zero
    variance; such rows are flagged, never dropped.
    """

    label: str
    train_corr: float | None
    test_corr: float | None
    n_train: int
    n_test: int

    @property
    def defined(self) -> bool:
        return self.train_corr is not None and self.test_corr is not None


@dataclass(frozen=True)
class CorrelationTable:
    label_kind: str        # "category" | "attribute"
    pairwise: bool
    rows: tuple[CorrRow, ...]

    def to_text(self) -> str:
        lines = [f"# label_kind={self.label_kind} pairwise={str(self.pairwise).lower()}",
                 "label\ttrain_corr\ttest_corr\tn_train\tn_test"]
        for r in self.rows:
            fmt = lambda v: "undefined" if v is None else repr(v)
            lines.append(f"{r.label}\t{fmt(r.train_corr)}\t{fmt(r.test_corr)}\t{r.n_train}\t{r.n_test}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.to_text(), encoding="utf-8")


def _region_labels(entry: ImageAttention, idx: int, label_kind: str) -> tuple[str, ...]:
    if label_kind == "category":
        return (entry.region_labels[idx],)
    if label_kind == "attribute":
        return entry.region_attributes[idx]
    raise ValueError(f"label_kind must be 'category' or 'attribute', got {label_kind!r}")


def _top_labels(log, label_kind: str, top_k: int) -> list[str]:
    counts: Counter[str] = Counter()
    for e in log:
        if e.split != "train":
            continue
        for idx in range(len(e.region_labels)):
            counts.update(_region_labels(e, idx, label_kind))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [label for label, _ in ranked[:top_k]]


def _safe_plcc(xs: list[float], ys: list[float], min_occurrences: int) -> float | None:
    if len(xs) < min_occurrences:
        return None
    x = np.asarray(xs)
    y = np.asarray(ys)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return None
    return plcc(x, y)


def attention_score_correlation(log, label_kind: str, top_k: int = DEFAULT_TOP_K,
                                score_source: str = "predicted",
                                min_occurrences: int = 3) -> CorrelationTable:
    """Correlate per-occurrence attention with image scores per label.

    The ``top_k`` most frequent labels on the train split are analyzed;
    every region occurrence contributes one (attention, image score)
    sample, separately per split.
    """
    top = _top_labels(log, label_kind, top_k)
    top_set = set(top)
    samples: dict[tuple[str, str], tuple[list[float], list[float]]] = defaultdict(lambda: ([], []))
    for e in log:
        score = _image_score(e, score_source)
        for idx in range(len(e.region_labels)):
            for label in _region_labels(e, idx, label_kind):
                if label in top_set:
                    xs, ys = samples[(label, e.split)]
                    xs.append(float(e.attention[idx]))
                    ys.append(score)

    rows = []
    for label in top:
        tr_x, tr_y = samples[(label, "train")]
        te_x, te_y = samples[(label, "test")]
        rows.append(CorrRow(
            label=label,
            train_corr=_safe_plcc(tr_x, tr_y, min_occurrences),
            test_corr=_safe_plcc(te_x, te_y, min_occurrences),
            n_train=len(tr_x),
            n_test=len(te_x),
        ))
    return CorrelationTable(label_kind=label_kind, pairwise=False, rows=tuple(rows))


def pair_attention_correlation(log, label_kind: str, top_k: int = DEFAULT_TOP_K,
                               score_source: str = "predicted",
                               min_occurrences: int = 3) -> CorrelationTable:
    """Correlate graph-attention intensities of label pairs with scores.

    For every unordered pair of top-frequency labels, each ordered
    region pair (i, j), i != j, whose labels match contributes the
    sample (alpha_ij, image score).  Self region pairs are excluded.
    """
    if not any(e.graph_attention is not None for e in log):
        raise ValueError("pair_attention_correlation: log carries no graph attention")
    top = _top_labels(log, label_kind, top_k)
    top_set = set(top)
    samples: dict[tuple[tuple[str, str], str], tuple[list[float], list[float]]] = \
        defaultdict(lambda: ([], []))
    for e in log:
        if e.graph_attention is None:
            continue
        score = _image_score(e, score_source)
        n = len(e.region_labels)
        labels_per_region = [
            tuple(lbl for lbl in _region_labels(e, idx, label_kind) if lbl in top_set)
            for idx in range(n)
        ]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                a = float(e.graph_attention[i, j])
                for li in labels_per_region[i]:
                    for lj in labels_per_region[j]:
                        key = (li, lj) if li <= lj else (lj, li)
                        xs, ys = samples[(key, e.split)]
                        xs.append(a)
                        ys.append(score)

    pair_keys = sorted({key for key, _ in samples})
    rows = []
    for key in pair_keys:
        tr_x, tr_y = samples[(key, "train")]
        te_x, te_y = samples[(key, "test")]
        rows.append(CorrRow(
            label=f"{key[0]}|{key[1]}",
            train_corr=_safe_plcc(tr_x, tr_y, min_occurrences),
            test_corr=_safe_plcc(te_x, te_y, min_occurrences),
            n_train=len(tr_x),
            n_test=len(te_x),
        ))
    return CorrelationTable(label_kind=label_kind, pairwise=True, rows=tuple(rows))


def cross_split_correlation(table: CorrelationTable) -> float:
    """Pearson correlation between the train and test correlation columns."""
    defined = [r for r in table.rows if r.defined]
    if len(defined) < 3:
        raise ValueError(f"cross_split_correlation: need at least 3 defined rows, got {len(defined)}")
    return plcc([r.train_corr for r in defined], [r.test_corr for r in defined])
