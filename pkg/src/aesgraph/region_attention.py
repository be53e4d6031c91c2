"""Region-attention stage: feature reduction, attention, re-weighting.

Raw global and regional features are first reduced by learned affine
maps.  The reduced regional features (in detector-confidence order) and
the reduced global feature (last) are concatenated and fed to a
two-layer predictor that emits one sigmoid weight per region; each
regional feature is then scaled by its weight.  A softmax head over the
concatenated weighted features yields the rating distribution when the
graph stage is disabled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import AttentionConfig

__all__ = ["LinearLayer", "init_linear", "reweight", "RegionAttentionNet", "DistributionHead"]


@dataclass
class LinearLayer:
    """Affine layer whose parameters live in a ParameterStore."""

    w: ad.Tensor
    b: ad.Tensor | None

    def __call__(self, x) -> ad.Tensor:
        return ad.linear(x, self.w, self.b)


def init_linear(store: ad.ParameterStore, rng: np.random.Generator, name: str,
                out_dim: int, in_dim: int, bias: bool = True) -> LinearLayer:
    """Register a linear layer: uniform(+-1/sqrt(fan_in)) weights, zero bias."""
    bound = 1.0 / np.sqrt(in_dim)
    w = store.add_parameter(f"{name}.w", rng.uniform(-bound, bound, size=(out_dim, in_dim)))
    b = store.add_parameter(f"{name}.b", np.zeros(out_dim)) if bias else None
    return LinearLayer(w, b)


def reweight(regionals, attention) -> ad.Tensor:
    """Scale each regional feature by its attention weight.

    ``regionals`` is [..., L, r] and ``attention`` [..., L]; weights
    broadcast over the feature axis.
    """
    attention = attention if isinstance(attention, ad.Tensor) else ad.Tensor(attention)
    regionals = regionals if isinstance(regionals, ad.Tensor) else ad.Tensor(regionals)
    if attention.shape != regionals.shape[:-1]:
        raise ad.ShapeError(
            f"reweight: attention shape {attention.shape} does not match regions {regionals.shape[:-1]}")
    scale = ad.reshape(attention, attention.shape + (1,))
    return ad.mul(regionals, scale)


class RegionAttentionNet:
    """Learned per-region importance over reduced generic features."""

    def __init__(self, cfg: AttentionConfig, store: ad.ParameterStore, rng: np.random.Generator):
        self.cfg = cfg
        p = cfg.profile
        self.regional_reduce = init_linear(store, rng, "regional_reduce", p.reduced_regional, p.d_r)
        if cfg.global_mode == "narrow":
            self.global_reduce = init_linear(store, rng, "global_reduce", p.reduced_global, p.d_g)
            self.global_blocks = None
        else:
            block_out = p.reduced_global // 3
            self.global_reduce = None
            self.global_blocks = [
                init_linear(store, rng, f"global_conv.{i}", block_out, p.d_g) for i in range(3)
            ]
        self.attention_fc1 = init_linear(store, rng, "region_attention.fc1",
                                         p.attention_hidden, p.attention_input)
        self.attention_bn = ad.BatchNormState(store, "region_attention.bn", p.attention_hidden)
        self.attention_fc2 = init_linear(store, rng, "region_attention.fc2",
                                         p.regions, p.attention_hidden)

    def set_mode(self, train: bool) -> None:
        self.attention_bn.mode = "train" if train else "eval"

    def reduce_regional(self, features) -> ad.Tensor:
        """Reduce raw regional features [..., d_r] -> [..., reduced]."""
        return ad.relu(self.regional_reduce(features))

    def reduce_global(self, feature) -> ad.Tensor:
        """Reduce the raw global feature to a [..., reduced_global] vector.

        Narrow mode maps the pooled vector directly.  Wide mode applies
        three pointwise blocks to each of the grid cells ([..., cells,
        d_g]), concatenates their channels, and average-pools the cells.
        """
        if self.cfg.global_mode == "narrow":
            return ad.relu(self.global_reduce(feature))
        parts = [ad.relu(block(feature)) for block in self.global_blocks]
        grid = ad.concat(parts, axis=-1)
        return ad.mean(grid, axis=-2)

    def predict_attention(self, reduced_regionals, reduced_global) -> ad.Tensor:
        """Per-region sigmoid weights from regions (in order) plus global.

        ``reduced_regionals`` is [B, L, r]; ``reduced_global`` is [B, g].
        """
        p = self.cfg.profile
        rr = reduced_regionals if isinstance(reduced_regionals, ad.Tensor) else ad.Tensor(reduced_regionals)
        if rr.ndim != 3 or rr.shape[1] != p.regions:
            raise ad.ShapeError(f"predict_attention: expected [batch, {p.regions}, {p.reduced_regional}] "
                                f"regionals, got {rr.shape}")
        flat = ad.reshape(rr, (rr.shape[0], p.regions * p.reduced_regional))
        z = ad.concat([flat, reduced_global], axis=1)
        h = ad.relu(ad.batch_norm(self.attention_fc1(z), self.attention_bn))
        return ad.sigmoid(self.attention_fc2(h))

    def forward(self, regional, global_feature):
        """Run the full stage on a batch.

        Returns (attention [B, L], weighted [B, L, r], reduced_global
        [B, g]).
        """
        rr = self.reduce_regional(regional)
        rg = self.reduce_global(global_feature)
        attention = self.predict_attention(rr, rg)
        return attention, reweight(rr, attention), rg


class DistributionHead:
    """Softmax layer mapping concatenated features to a rating distribution."""

    def __init__(self, store: ad.ParameterStore, rng: np.random.Generator, in_dim: int, buckets: int):
        self.fc = init_linear(store, rng, "head", buckets, in_dim)

    def __call__(self, x) -> ad.Tensor:
        return ad.softmax(self.fc(x), axis=-1)
