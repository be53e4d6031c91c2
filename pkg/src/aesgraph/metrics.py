"""Training loss and evaluation metrics for rating distributions.

The loss is the root-mean-square difference between the cumulative
distribution functions of the ground-truth and predicted 10-bucket
rating histograms.  Evaluation converts distributions to mean/std
scores, correlates them across a dataset (Spearman and Pearson), and
reports binary accuracy at the score-5 cut-off.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad

__all__ = [
    "emd_loss",
    "dist_mean",
    "dist_std",
    "srcc",
    "plcc",
    "binary_accuracy",
    "EvalReport",
    "evaluate",
]


def emd_loss(p, q) -> ad.Tensor:
    """RMS difference of CDFs between two distributions, in [0, 1].

    Accepts [..., K] stacks and reduces over the last axis only, so a
    batch of pairs yields a batch of losses.  Differentiable in either
    argument; pass plain arrays for constants.
    """
    p = p if isinstance(p, ad.Tensor) else ad.Tensor(np.asarray(p, dtype=np.float64))
    q = q if isinstance(q, ad.Tensor) else ad.Tensor(np.asarray(q, dtype=np.float64))
    if p.shape != q.shape or p.ndim < 1:
        raise ValueError(f"emd_loss: distributions must share shape, got {p.shape} and {q.shape}")
    diff = ad.sub(ad.cumsum(p, axis=-1), ad.cumsum(q, axis=-1))
    return ad.sqrt(ad.mean(ad.mul(diff, diff), axis=-1))


_BUCKETS = np.arange(1.0, 11.0)


def dist_mean(p) -> np.ndarray | float:
    """Average score of a normalized distribution: sum of j * p_j."""
    p = np.asarray(p, dtype=np.float64)
    out = p @ _BUCKETS[: p.shape[-1]]
    return float(out) if out.ndim == 0 else out


def dist_std(p) -> np.ndarray | float:
    """Score standard deviation of a normalized distribution."""
    p = np.asarray(p, dtype=np.float64)
    buckets = _BUCKETS[: p.shape[-1]]
    mu = p @ buckets
    var = ((buckets - np.expand_dims(mu, -1)) ** 2 * p).sum(axis=-1)
    out = np.sqrt(np.maximum(var, 0.0))
    return float(out) if out.ndim == 0 else out


def _check_corr_input(x: np.ndarray, y: np.ndarray, name: str) -> None:
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"{name}: expected equal-length 1-D sequences, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError(f"{name}: need at least 2 samples, got {x.size}")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ValueError(f"{name}: undefined for a constant sequence")


def plcc(x, y) -> float:
    """Pearson linear correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_corr_input(x, y, "plcc")
    xc = x - x.mean()
    yc = y - y.mean()
    return float((xc @ yc) / np.sqrt((xc @ xc) * (yc @ yc)))


def srcc(x, y) -> float:
    """Spearman rank-order correlation; ties get average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_corr_input(x, y, "srcc")
    return plcc(rankdata(x), rankdata(y))


def binary_accuracy(pred_dists, gt_dists) -> float:
    """Fraction of matching high/low labels at the score-5 cut-off.

    A mean score above 5 is the high-aesthetic class; exactly 5 counts
    as low.
    """
    pred = np.atleast_2d(np.asarray(pred_dists, dtype=np.float64))
    gt = np.atleast_2d(np.asarray(gt_dists, dtype=np.float64))
    if pred.shape != gt.shape:
        raise ValueError(f"binary_accuracy: shape mismatch {pred.shape} vs {gt.shape}")
    if pred.shape[0] == 0:
        raise ValueError("binary_accuracy: empty input")
    return float(((dist_mean(pred) > 5.0) == (dist_mean(gt) > 5.0)).mean())


@dataclass(frozen=True)
class EvalReport:
    """Dataset-level evaluation summary."""

    srcc_mean: float
    plcc_mean: float
    srcc_std: float
    plcc_std: float
    accuracy: float
    mean_emd: float

    _FIELDS = ("srcc_mean", "plcc_mean", "srcc_std", "plcc_std", "accuracy", "mean_emd")

    def to_text(self) -> str:
        ordered = {name: getattr(self, name) for name in self._FIELDS}
        return json.dumps(ordered, indent=2) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(**{name: float(d[name]) for name in cls._FIELDS})


def evaluate(pred_dists, gt_dists) -> EvalReport:
    """Score a set of predicted distributions against ground truth."""
    pred = np.asarray(pred_dists, dtype=np.float64)
    gt = np.asarray(gt_dists, dtype=np.float64)
    if pred.ndim != 2 or pred.shape != gt.shape:
        raise ValueError(f"evaluate: expected matching [n, K] stacks, got {pred.shape} and {gt.shape}")
    pred_mu, gt_mu = dist_mean(pred), dist_mean(gt)
    pred_sd, gt_sd = dist_std(pred), dist_std(gt)
    return EvalReport(
        srcc_mean=srcc(pred_mu, gt_mu),
        plcc_mean=plcc(pred_mu, gt_mu),
        srcc_std=srcc(pred_sd, gt_sd),
        plcc_std=plcc(pred_sd, gt_sd),
        accuracy=binary_accuracy(pred, gt),
        mean_emd=float(emd_loss(gt, pred).data.mean()),
    )
