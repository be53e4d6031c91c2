"""Optimization loop: Adam updates, LR schedule, batching, checkpoints.

Training minimizes the mean CDF-RMS loss over seeded, shuffled
mini-batches.  The learning rate holds at the base value for two epochs
and is divided by 10 at epochs 3, 6, 9, ...  After every epoch the model
is scored on the evaluation split in eval mode; the checkpoint with the
best mean-score Spearman correlation is retained.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import metrics
from .config import TrainConfig
from .data import ImageRecord, collate
from .model import Model, predict_records

__all__ = ["AdamState", "lr_at_epoch", "adam_step", "train", "TrainResult"]


class AdamState:
    """First/second moment accumulators for every parameter in a store."""

    def __init__(self, store: ad.ParameterStore, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in store.parameters()}
        self.v = {name: np.zeros_like(p.data) for name, p in store.parameters()}


def adam_step(store: ad.ParameterStore, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update in place; gradients are zeroed after."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in store.parameters():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} does not match "
                             f"parameter {name!r} shape {p.data.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        p.grad = None


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """Learning rate for a 1-based epoch under the decay schedule."""
    if epoch < 1:
        raise ValueError(f"epoch is 1-based, got {epoch}")
    if not config.lr_schedule or epoch < 3:
        return config.base_lr
    decays = (epoch - 3) // 3 + 1
    return config.base_lr / 10.0 ** decays


def _batch_slices(n: int, batch_size: int) -> list[slice]:
    slices = [slice(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    # A trailing singleton cannot pass train-mode batch norm; merge it
    # into the previous batch.
    if len(slices) >= 2 and slices[-1].stop - slices[-1].start == 1:
        slices[-2:] = [slice(slices[-2].start, slices[-1].stop)]
    return slices


@dataclass
class TrainResult:
    model: Model                      # final-state model (mutated in place)
    best_checkpoint: bytes            # snapshot with the best eval SRCC(mean)
    best_epoch: int
    reports: list[metrics.EvalReport]
    log_lines: list[str]


def train(records: list[ImageRecord], config: TrainConfig) -> TrainResult:
    """Train a model on the train split of ``records``.

    Raises on an empty train split or a non-finite loss.  Given
    identical (records, config) the result is bit-reproducible,
    including the checkpoint bytes and log lines.
    """
    train_records = [r for r in records if r.split == "train"]
    eval_records = [r for r in records if r.split == config.eval_split]
    if not train_records:
        raise ValueError("train: no records in the train split")
    if len(eval_records) < 2:
        raise ValueError(f"train: need at least 2 records in the {config.eval_split!r} split to evaluate")

    rng = np.random.default_rng(config.seed)
    model = Model(config.model_config(), seed=config.seed)
    adam = AdamState(model.store)

    max_steps = config.max_steps if config.max_steps is not None else math.inf
    epochs = config.epochs if config.max_steps is None else math.inf

    log_lines: list[str] = []
    reports: list[metrics.EvalReport] = []
    best_srcc = -math.inf
    best_blob = model.dumps()
    best_epoch = 0

    step = 0
    epoch = 0
    while epoch < epochs and step < max_steps:
        epoch += 1
        lr = lr_at_epoch(epoch, config)
        order = rng.permutation(len(train_records))
        for sl in _batch_slices(len(train_records), config.batch_size):
            batch = collate([train_records[i] for i in order[sl]])
            model.set_train(True)
            with ad.Tape() as tape:
                out = model.forward(batch)
                loss = ad.mean(metrics.emd_loss(batch.distributions, out.distribution))
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise RuntimeError(f"train: non-finite loss {loss_value} at step {step + 1} "
                                   f"(epoch {epoch}); aborting")
            ad.backward(tape, loss)
            adam_step(model.store, adam, lr)
            step += 1
            log_lines.append(json.dumps(
                {"step": step, "epoch": epoch, "lr": lr, "loss": loss_value},
                sort_keys=True, separators=(",", ":")))
            if step >= max_steps:
                break

        preds = predict_records(model, eval_records, batch_size=config.eval_batch)
        gt = np.stack([r.distribution for r in eval_records])
        report = metrics.evaluate(preds.distributions, gt)
        reports.append(report)
        if report.srcc_mean > best_srcc:
            best_srcc = report.srcc_mean
            best_blob = model.dumps()
            best_epoch = epoch

    return TrainResult(model=model, best_checkpoint=best_blob, best_epoch=best_epoch,
                       reports=reports, log_lines=log_lines)
