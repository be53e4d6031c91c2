"""Dataclass configurations shared across the package.

Two feature profiles are provided.  "full" uses the dimensions of the
production feature extractors (16928-dim pooled backbone features, 10
regions, 10 score buckets).  "desk" scales every width down while
preserving all architectural ratios and concatenation constraints, so
gradient checks and overfit runs finish in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "FeatureProfile",
    "DESK_PROFILE",
    "FULL_PROFILE",
    "PROFILES",
    "AttentionConfig",
    "GraphConfig",
    "ModelConfig",
    "TrainConfig",
    "PlantConfig",
    "ARCHES",
]


@dataclass(frozen=True)
class FeatureProfile:
    """Dimension ledger for one model scale.

    ``reduced_global`` must be divisible by 3 (the wide global path
    concatenates three equal convolution blocks) and ``node_global`` is
    the slice of each graph node carrying global context.
    """

    name: str
    d_g: int                # raw global feature length (per spatial cell in wide mode)
    d_r: int                # raw regional feature length
    reduced_global: int
    reduced_regional: int
    attention_hidden: int   # hidden width of the region-attention predictor
    node_global: int        # global slice of a graph node feature
    pair_projection: int    # rows of the pairwise tanh projection
    regions: int = 10
    buckets: int = 10
    grid_cells: int = 25    # spatial positions of a wide global feature (5x5)

    def __post_init__(self):
        if self.reduced_global % 3 != 0:
            raise ValueError(f"reduced_global must be divisible by 3, got {self.reduced_global}")

    @property
    def node_dim(self) -> int:
        return self.reduced_regional + self.node_global

    @property
    def attention_input(self) -> int:
        return self.regions * self.reduced_regional + self.reduced_global

    @property
    def head_input(self) -> int:
        return self.regions * self.reduced_regional

    @property
    def edge_input_full(self) -> int:
        # scalar similarity + two projected node features + 3 spatial relations
        return 1 + 2 * self.pair_projection + 3


FULL_PROFILE = FeatureProfile(
    name="full",
    d_g=16928,
    d_r=16928,
    reduced_global=6144,
    reduced_regional=256,
    attention_hidden=4096,
    node_global=128,
    pair_projection=128,
)

DESK_PROFILE = FeatureProfile(
    name="desk",
    d_g=64,
    d_r=32,
    reduced_global=48,
    reduced_regional=8,
    attention_hidden=64,
    node_global=4,
    pair_projection=8,
)

PROFILES = {"full": FULL_PROFILE, "desk": DESK_PROFILE}

ARCHES = ("baseline", "region", "graph")


@dataclass(frozen=True)
class AttentionConfig:
    """Configuration of the region-attention stage.

    ``global_mode`` selects how the raw global feature arrives: "narrow"
    (a single pooled vector) or "wide" (a 5x5 grid reduced by three
    pointwise convolution blocks and average pooling).
    """

    profile: FeatureProfile = DESK_PROFILE
    global_mode: str = "narrow"

    def __post_init__(self):
        if self.global_mode not in ("narrow", "wide"):
            raise ValueError(f"global_mode must be 'narrow' or 'wide', got {self.global_mode!r}")
        p = self.profile
        if p.attention_input != p.regions * p.reduced_regional + p.reduced_global:
            raise ValueError("attention input dimension ledger violated")


@dataclass(frozen=True)
class GraphConfig:
    """Configuration of the graph-attention stage.

    Relation toggles shrink the edge-scorer input by removing the
    corresponding sub-vector; its hidden width stays at the full size so
    the second layer is stable across ablations.
    """

    profile: FeatureProfile = DESK_PROFILE
    use_visual: bool = True
    use_semantic: bool = True
    use_spatial: bool = True

    def __post_init__(self):
        if not (self.use_visual or self.use_semantic or self.use_spatial):
            raise ValueError("graph attention requires at least one relation enabled")

    @property
    def edge_input(self) -> int:
        p = self.profile
        dim = 0
        if self.use_visual:
            dim += 1
        if self.use_semantic:
            dim += 2 * p.pair_projection
        if self.use_spatial:
            dim += 3
        return dim

    @property
    def edge_hidden(self) -> int:
        return self.profile.edge_input_full


@dataclass(frozen=True)
class ModelConfig:
    """Full model selection: architecture arm plus stage configurations."""

    arch: str = "graph"
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)

    def __post_init__(self):
        if self.arch not in ARCHES:
            raise ValueError(f"arch must be one of {ARCHES}, got {self.arch!r}")
        if self.attention.profile != self.graph.profile:
            raise ValueError("attention and graph stages must share one profile")

    @property
    def profile(self) -> FeatureProfile:
        return self.attention.profile

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "profile": self.profile.name,
            "global_mode": self.attention.global_mode,
            "use_visual": self.graph.use_visual,
            "use_semantic": self.graph.use_semantic,
            "use_spatial": self.graph.use_spatial,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        profile = PROFILES[d["profile"]]
        return cls(
            arch=d["arch"],
            attention=AttentionConfig(profile=profile, global_mode=d["global_mode"]),
            graph=GraphConfig(
                profile=profile,
                use_visual=d["use_visual"],
                use_semantic=d["use_semantic"],
                use_spatial=d["use_spatial"],
            ),
        )


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    Defaults mirror the production schedule: 10 epochs, batch 128, base
    learning rate 3e-5 held for two epochs then divided by 10 every
    three.  Desk-scale runs typically override batch size (8) and the
    learning rate, and may disable the schedule.
    """

    epochs: int = 10
    batch_size: int = 128
    base_lr: float = 3e-5
    lr_schedule: bool = True
    seed: int = 0
    profile: str = "full"
    arch: str = "graph"
    global_mode: str = "narrow"
    use_visual: bool = True
    use_semantic: bool = True
    use_spatial: bool = True
    max_steps: int | None = None
    eval_split: str = "test"
    eval_batch: int = 64

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.base_lr <= 0:
            raise ValueError("epochs, batch_size and base_lr must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.eval_split not in ("train", "test"):
            raise ValueError(f"eval_split must be 'train' or 'test', got {self.eval_split!r}")

    def model_config(self) -> ModelConfig:
        profile = PROFILES[self.profile]
        return ModelConfig(
            arch=self.arch,
            attention=AttentionConfig(profile=profile, global_mode=self.global_mode),
            graph=GraphConfig(
                profile=profile,
                use_visual=self.use_visual,
                use_semantic=self.use_semantic,
                use_spatial=self.use_spatial,
            ),
        )


@dataclass(frozen=True)
class PlantConfig:
    """Planted structure for the synthetic generator.

    ``label``/``correlation`` give regions carrying ``label`` a feature
    channel correlated with the image's mean vote at the requested
    strength.  The structural weights shape how much score variance is
    driven by the global feature, by a single marked subject region, and
    by the spatial neighborhood term (a box-geometry-weighted mix of
    region values that only a relation-aware model can recover).
    """

    label: str | None = None
    label_kind: str = "category"
    correlation: float = 0.0
    presence: float = 0.25        # probability that a region carries the planted label
    global_weight: float = 0.0
    subject_weight: float = 0.0
    spatial_weight: float = 0.0
    noise: float = 0.25

    def __post_init__(self):
        if self.label_kind not in ("category", "attribute"):
            raise ValueError(f"label_kind must be 'category' or 'attribute', got {self.label_kind!r}")
        if not -1.0 <= self.correlation <= 1.0:
            raise ValueError(f"correlation must lie in [-1, 1], got {self.correlation}")
