"""Graph-attention stage over the complete region graph.

Every image yields a complete directed graph (self-loops included) whose
nodes carry a weighted regional feature concatenated with a reduced
global context slice.  Each ordered pair is described by three relation
groups: a visual similarity scalar (L1 distance of tanh-projected node
features), a semantic co-occurrence vector (the two projections
concatenated), and a spatial 3-vector from box geometry.  A two-layer
scorer turns relations into logits, a row softmax yields attention over
incoming edges, and nodes are re-aggregated through a learned map with
an eLU on top.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import geometry
from .config import GraphConfig
from .region_attention import init_linear

__all__ = ["GraphAttentionNet"]


class GraphAttentionNet:
    """Pairwise relevance estimation and attention-weighted aggregation."""

    def __init__(self, cfg: GraphConfig, store: ad.ParameterStore, rng: np.random.Generator):
        self.cfg = cfg
        p = cfg.profile
        self.node_global = init_linear(store, rng, "node_global", p.node_global, p.reduced_global)
        self.pair_projection = init_linear(store, rng, "pair_projection",
                                           p.pair_projection, p.node_dim, bias=False)
        self.edge_fc1 = init_linear(store, rng, "edge_scorer.fc1", cfg.edge_hidden, cfg.edge_input)
        # No output bias: the row softmax is invariant to a uniform logit
        # shift, which would make the bias unidentifiable (zero gradient).
        self.edge_fc2 = init_linear(store, rng, "edge_scorer.fc2", 1, cfg.edge_hidden, bias=False)
        self.aggregate_map = init_linear(store, rng, "aggregate",
                                         p.reduced_regional, p.node_dim, bias=False)

    def build_nodes(self, weighted, reduced_global) -> ad.Tensor:
        """Node features [B, L, node_dim]: weighted regional || global slice.

        The global slice is identical across the nodes of one image.
        """
        p = self.cfg.profile
        weighted = weighted if isinstance(weighted, ad.Tensor) else ad.Tensor(weighted)
        b, l = weighted.shape[0], weighted.shape[1]
        if l != p.regions or weighted.shape[2] != p.reduced_regional:
            raise ad.ShapeError(f"build_nodes: expected [batch, {p.regions}, {p.reduced_regional}] "
                                f"weighted features, got {weighted.shape}")
        g = ad.relu(self.node_global(reduced_global))
        g3 = ad.broadcast_to(ad.reshape(g, (b, 1, p.node_global)), (b, l, p.node_global))
        return ad.concat([weighted, g3], axis=2)

    def relation_features(self, h_i, h_j, box_i: geometry.Box, box_j: geometry.Box):
        """Relation triple for one ordered node pair.

        Returns (s, c, d): the visual similarity scalar, the semantic
        concatenation vector (2 * projection width), and the constant
        spatial 3-vector.  The batched path below computes the same
        quantities for all pairs at once.
        """
        t_i = ad.tanh(self.pair_projection(h_i))
        t_j = ad.tanh(self.pair_projection(h_j))
        s = ad.l1_distance(t_i, t_j)
        c = ad.concat([t_i, t_j], axis=0)
        d = geometry.spatial_features(box_i, box_j)
        return s, c, d

    def edge_attention(self, nodes, spatial) -> ad.Tensor:
        """Attention over incoming edges: alpha [B, L, L], rows sum to 1.

        ``spatial`` is the constant [B, L, L, 3] relation block; entry
        (i, j) weights the contribution of node j to central node i.
        Disabled relation groups are omitted from the scorer input.
        """
        cfg = self.cfg
        b, l = nodes.shape[0], nodes.shape[1]
        t = ad.tanh(self.pair_projection(nodes))
        parts = []
        if cfg.use_visual:
            parts.append(ad.reshape(ad.pairwise_l1(t), (b, l, l, 1)))
        if cfg.use_semantic:
            parts.append(ad.pairwise_concat(t))
        if cfg.use_spatial:
            parts.append(ad.Tensor(spatial))
        relations = ad.concat(parts, axis=3)
        hidden = ad.relu(self.edge_fc1(relations))
        logits = ad.reshape(self.edge_fc2(hidden), (b, l, l))
        return ad.softmax(logits, axis=2)

    def aggregate(self, nodes, alpha) -> ad.Tensor:
        """Attention-weighted node mix: h'_i = eLU(sum_j alpha_ij (W h_j))."""
        projected = self.aggregate_map(nodes)
        return ad.elu(ad.matmul(alpha, projected))

    def forward(self, weighted, reduced_global, spatial):
        """Run the full stage; returns (alpha [B, L, L], aggregated [B, L, r])."""
        nodes = self.build_nodes(weighted, reduced_global)
        alpha = self.edge_attention(nodes, spatial)
        return alpha, self.aggregate(nodes, alpha)

    @staticmethod
    def spatial_block(boxes_per_image) -> np.ndarray:
        """Stack per-image spatial relation matrices into [B, L, L, 3]."""
        return np.stack([geometry.spatial_matrix(boxes) for boxes in boxes_per_image])
