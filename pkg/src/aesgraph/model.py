"""Model assembly: baseline, region-attention, and graph arms.

The baseline concatenates reduced regional features directly into the
distribution head.  "region" adds the attention re-weighting stage, and
"graph" further aggregates the weighted features over the complete
region graph before the head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .config import ModelConfig
from .data import Batch, collate
from .graph_attention import GraphAttentionNet
from .region_attention import DistributionHead, RegionAttentionNet, init_linear

__all__ = ["Model", "ModelOutput", "PredictionSet", "predict_records"]


@dataclass
class ModelOutput:
    """Raw forward results for one batch (tape tensors)."""

    distribution: ad.Tensor          # [B, K]
    attention: ad.Tensor | None      # [B, L]
    alpha: ad.Tensor | None          # [B, L, L]


class Model:
    """A parameterized predictor of aesthetic rating distributions."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.store = ad.ParameterStore()
        rng = np.random.default_rng(seed)
        p = config.profile

        if config.arch == "baseline":
            self.regional_reduce = init_linear(self.store, rng, "regional_reduce",
                                               p.reduced_regional, p.d_r)
            self.attention_net = None
            self.graph_net = None
        else:
            self.attention_net = RegionAttentionNet(config.attention, self.store, rng)
            self.graph_net = (GraphAttentionNet(config.graph, self.store, rng)
                              if config.arch == "graph" else None)
        self.head = DistributionHead(self.store, rng, p.head_input, p.buckets)
        self.training = False
        self.set_train(False)

    def set_train(self, train: bool) -> None:
        self.training = bool(train)
        if self.attention_net is not None:
            self.attention_net.set_mode(train)

    def forward(self, batch: Batch) -> ModelOutput:
        p = self.config.profile
        b = len(batch)

        if self.config.arch == "baseline":
            reduced = ad.relu(self.regional_reduce(batch.regional))
            flat = ad.reshape(reduced, (b, p.head_input))
            return ModelOutput(self.head(flat), None, None)

        attention, weighted, reduced_global = self.attention_net.forward(
            batch.regional, batch.global_feature)
        if self.config.arch == "region":
            flat = ad.reshape(weighted, (b, p.head_input))
            return ModelOutput(self.head(flat), attention, None)

        spatial = GraphAttentionNet.spatial_block(batch.boxes)
        alpha, aggregated = self.graph_net.forward(weighted, reduced_global, spatial)
        flat = ad.reshape(aggregated, (b, p.head_input))
        return ModelOutput(self.head(flat), attention, alpha)

    # -- persistence -------------------------------------------------------

    def dumps(self) -> bytes:
        return checkpoint.dumps_checkpoint(self.store, self.config.to_dict())

    def save(self, path) -> None:
        checkpoint.save_checkpoint(path, self.store, self.config.to_dict())

    @classmethod
    def load(cls, path) -> "Model":
        cfg_dict, params, buffers = checkpoint.load_checkpoint(path)
        model = cls(ModelConfig.from_dict(cfg_dict), seed=0)
        model.store.load_values(params, buffers)
        return model

    @classmethod
    def loads(cls, blob: bytes) -> "Model":
        cfg_dict, params, buffers = checkpoint.loads_checkpoint(blob)
        model = cls(ModelConfig.from_dict(cfg_dict), seed=0)
        model.store.load_values(params, buffers)
        return model


@dataclass
class PredictionSet:
    """Eval-mode predictions over a list of records (plain arrays)."""

    ids: list[str]
    distributions: np.ndarray          # [N, K]
    attention: np.ndarray | None       # [N, L]
    alpha: np.ndarray | None           # [N, L, L]


def predict_records(model: Model, records, batch_size: int = 64) -> PredictionSet:
    """Run eval-mode inference over records in chunks (no tape)."""
    records = list(records)
    if not records:
        raise ValueError("predict_records: empty record list")
    model.set_train(False)
    dists, attns, alphas = [], [], []
    for start in range(0, len(records), batch_size):
        out = model.forward(collate(records[start:start + batch_size]))
        dists.append(out.distribution.data)
        if out.attention is not None:
            attns.append(out.attention.data)
        if out.alpha is not None:
            alphas.append(out.alpha.data)
    return PredictionSet(
        ids=[r.id for r in records],
        distributions=np.concatenate(dists),
        attention=np.concatenate(attns) if attns else None,
        alpha=np.concatenate(alphas) if alphas else None,
    )
