"""Seeded synthetic dataset generator.

Replaces the upstream CNN/detector stage with reproducible records:
random boxes, labels from fixed vocabularies, Gaussian features, and
vote histograms discretized from a per-image score law.  A PlantConfig
optionally wires structure into the data:

* ``label``/``correlation`` - regions carrying the label get a feature
  channel correlated with the image's mean vote at the given strength;
* ``global_weight`` - score variance carried by the global feature;
* ``subject_weight`` - score variance carried by the value channel of a
  marked subject region (readable through a multiplicative gate, which
  a plain linear head cannot express);
* ``spatial_weight`` - score variance carried by a box-geometry-weighted
  mix of region values, orthogonalized against the raw values so that
  only a model consuming pairwise spatial relations can recover it.

The generator is a pure function of its arguments: the same call yields
the same records.
"""

from __future__ import annotations

import math

import numpy as np

from .config import PROFILES, PlantConfig
from .data import ImageRecord, RatingVotes, RegionRecord
from .geometry import Box

__all__ = [
    "CATEGORY_VOCAB",
    "ATTRIBUTE_VOCAB",
    "SEMANTIC_CATEGORIES",
    "generate_synthetic",
]

CATEGORY_VOCAB = (
    "background", "sky", "cloud", "sun", "tree", "grass", "leaf", "branch", "flower",
    "petal", "water", "sea", "wave", "mountain", "rock", "sand", "building", "window",
    "door", "roof", "wall", "street", "road", "sign", "car", "wheel", "bike", "boat",
    "sail", "sailboat", "surfboard", "lighthouse", "person", "people", "man", "woman",
    "face", "head", "hair", "eye", "eyes", "eyebrow", "mouth", "lips", "nose", "ear",
    "neck", "teeth", "beard", "glasses", "hat", "jacket", "shirt", "collar", "earring",
    "hand", "arm", "leg", "shoe", "sock", "glove", "helmet", "bird", "beak", "wing",
    "tail", "dog", "cat", "foot", "graffiti", "line", "light", "shadow", "reflection",
    "table", "plate", "food", "drink", "glass", "bottle", "fruit",
)

ATTRIBUTE_VOCAB = (
    "blurry", "sharp", "bright", "dark", "colorful", "white", "black", "red", "green",
    "blue", "yellow", "brown", "gray", "small", "large", "round", "square", "long",
    "short", "shiny", "wet", "dry", "old", "young", "smooth", "rough", "open",
    "closed", "striped", "spotted",
)

SEMANTIC_CATEGORIES = (
    "portrait", "landscape", "seascape", "urban", "animal", "sports", "floral",
    "still-life", "generic",
)

# Feature channel layout (both regional and global features carry plain
# Gaussian noise beyond the structured channels).
_CH_MARKER = 0    # 2.0 on the marked subject region
_CH_VALUE = 1     # per-region value; the subject carries the subject driver
_CH_CONST = 2     # constant 1.0, lets a linear head read attention directly
_CH_PLANT = 3     # planted-label correlation channel
_SCORE_SPREAD = 1.3


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _discretize_votes(mu: float, sigma: float, total: int) -> tuple[int, ...]:
    """Integer vote counts from a Gaussian score law (largest remainder)."""
    probs = np.array([
        _norm_cdf((j + 0.5 - mu) / sigma) - _norm_cdf((j - 0.5 - mu) / sigma)
        for j in range(1, 11)
    ])
    probs = probs / probs.sum()
    raw = probs * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return tuple(int(c) for c in counts)


def _standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd < 1e-12:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def generate_synthetic(seed: int, n: int, profile: str = "desk",
                       plant: PlantConfig | None = None,
                       global_mode: str = "narrow",
                       train_fraction: float = 0.8) -> list[ImageRecord]:
    """Generate ``n`` reproducible records under the given profile."""
    if n < 1:
        raise ValueError(f"need at least one record, got n={n}")
    if global_mode not in ("narrow", "wide"):
        raise ValueError(f"global_mode must be 'narrow' or 'wide', got {global_mode!r}")
    prof = PROFILES[profile]
    plant = plant or PlantConfig()
    rng = np.random.default_rng(seed)

    n_train = int(round(n * train_fraction))
    split_order = rng.permutation(n)
    splits = np.array(["test"] * n, dtype=object)
    splits[split_order[:n_train]] = "train"

    # Keep the planted label out of the random pools so that exactly the
    # regions marked by the presence draw carry it (stray occurrences
    # would dilute the planted correlation).
    category_pool = CATEGORY_VOCAB
    attribute_pool = ATTRIBUTE_VOCAB
    if plant.label is not None:
        if plant.label_kind == "category":
            category_pool = tuple(c for c in CATEGORY_VOCAB if c != plant.label)
        else:
            attribute_pool = tuple(a for a in ATTRIBUTE_VOCAB if a != plant.label)

    u_global = rng.standard_normal(n)
    subject_driver = rng.standard_normal(n)
    score_noise = rng.standard_normal(n)

    # Pass 1: per-image geometry, labels, and raw feature noise.
    sizes, categories, boxes_all, confs_all = [], [], [], []
    labels_all, attrs_all, subject_idx_all, values_all = [], [], [], []
    regional_noise, global_noise, plant_noise, sigmas, totals = [], [], [], [], []
    planted_mask_all = []
    L = prof.regions
    for i in range(n):
        sizes.append((int(rng.integers(320, 1025)), int(rng.integers(320, 1025))))
        categories.append(str(rng.choice(SEMANTIC_CATEGORIES)))

        boxes = []
        for _ in range(L):
            cx, cy = rng.uniform(0.12, 0.88, size=2)
            w, h = rng.uniform(0.08, 0.3, size=2)
            boxes.append(Box(max(cx - w / 2, 0.0), max(cy - h / 2, 0.0),
                             min(cx + w / 2, 1.0), min(cy + h / 2, 1.0)))
        boxes_all.append(boxes)
        confs_all.append(np.sort(rng.uniform(0.5, 0.99, size=L))[::-1])

        labels = [str(lbl) for lbl in rng.choice(category_pool, size=L)]
        attrs = [tuple(str(a) for a in rng.choice(attribute_pool, size=int(rng.integers(1, 4)),
                                                  replace=False))
                 for _ in range(L)]
        planted = np.zeros(L, dtype=bool)
        if plant.label is not None:
            planted = rng.uniform(size=L) < plant.presence
            for j in range(L):
                if not planted[j]:
                    continue
                if plant.label_kind == "category":
                    labels[j] = plant.label
                elif plant.label not in attrs[j]:
                    attrs[j] = attrs[j] + (plant.label,)
        labels_all.append(labels)
        attrs_all.append(attrs)
        planted_mask_all.append(planted)

        subject_idx = int(rng.integers(L))
        values = rng.standard_normal(L)
        values[subject_idx] = subject_driver[i]
        subject_idx_all.append(subject_idx)
        values_all.append(values)

        regional_noise.append(rng.normal(0.0, 0.5, size=(L, prof.d_r)))
        global_noise.append(rng.normal(0.0, 0.5, size=prof.d_g))
        plant_noise.append(rng.standard_normal(L))
        sigmas.append(float(rng.uniform(1.0, 1.8)))
        totals.append(int(rng.integers(150, 400)))

    wide_noise = rng.normal(0.0, 0.25, size=(n, prof.grid_cells, prof.d_g)) if global_mode == "wide" else None

    # Pass 2: the spatial neighborhood term and the score law.  Each
    # region attends to the others with softmax(-4 * center distance)
    # weights; the term is the mean attended value.  This is exactly the
    # functional family a relation-aware aggregator can express, while
    # box geometry stays invisible to feature-only models.
    values_mat = np.stack(values_all)
    z_raw = np.empty(n)
    for i in range(n):
        centers = np.array([b.center for b in boxes_all[i]])
        dist = np.hypot(centers[:, None, 0] - centers[None, :, 0],
                        centers[:, None, 1] - centers[None, :, 1])
        logits = -4.0 * dist
        np.fill_diagonal(logits, -np.inf)
        w = np.exp(logits - logits.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        z_raw[i] = (w @ values_all[i]).mean()
    if n > 1:
        design = np.column_stack([values_mat, np.ones(n)])
        coef, *_ = np.linalg.lstsq(design, z_raw, rcond=None)
        z_spatial = _standardize(z_raw - design @ coef)
    else:
        z_spatial = np.zeros(n)

    raw_score = (plant.global_weight * _standardize(u_global)
                 + plant.subject_weight * _standardize(subject_driver)
                 + plant.spatial_weight * z_spatial
                 + plant.noise * score_noise)
    score_z = _standardize(raw_score) if n > 1 else np.zeros(n)
    mu = np.clip(5.5 + _SCORE_SPREAD * score_z, 1.3, 9.7)

    # Pass 3: assemble features and votes (no further rng draws).
    rho = plant.correlation
    records = []
    for i in range(n):
        regional = regional_noise[i]
        regional[:, _CH_MARKER] = 0.0
        regional[subject_idx_all[i], _CH_MARKER] = 2.0
        regional[:, _CH_VALUE] = values_all[i]
        regional[:, _CH_CONST] = 1.0
        channel = plant_noise[i].copy()
        if plant.label is not None:
            mask = planted_mask_all[i]
            channel[mask] = rho * score_z[i] + math.sqrt(max(1.0 - rho * rho, 0.0)) * plant_noise[i][mask]
        regional[:, _CH_PLANT] = channel

        g = global_noise[i]
        g[0:4] = u_global[i]
        if global_mode == "wide":
            g = g[None, :] + wide_noise[i]

        regions = tuple(
            RegionRecord(
                box=boxes_all[i][j],
                confidence=float(confs_all[i][j]),
                category_label=labels_all[i][j],
                attribute_labels=attrs_all[i][j],
                feature=regional[j].copy(),
            )
            for j in range(L)
        )
        width, height = sizes[i]
        records.append(ImageRecord(
            id=f"img-{i:06d}",
            width=width,
            height=height,
            semantic_category=categories[i],
            split=str(splits[i]),
            global_feature=np.asarray(g, dtype=np.float64),
            regions=regions,
            votes=RatingVotes(_discretize_votes(float(mu[i]), sigmas[i], totals[i])),
        ))
    return records
