"""Dataset container formats and vote normalization.

A dataset is a pair of files: a line-delimited JSON manifest (one header
line, then one line per image record, stable key order) and a binary
feature blob (magic + version header, then concatenated little-endian
float32 runs addressed by manifest offsets).  Features are widened to
float64 in memory.  Writing is deterministic, so write -> load -> write
reproduces both files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import PROFILES
from .geometry import Box

__all__ = [
    "VOTE_BUCKETS",
    "REGION_COUNT",
    "DataFormatError",
    "RatingVotes",
    "normalize_votes",
    "RegionRecord",
    "ImageRecord",
    "DatasetManifest",
    "pad_regions",
    "write_dataset",
    "read_manifest",
    "load_dataset",
    "dataset_paths",
    "Batch",
    "collate",
]

VOTE_BUCKETS = 10
REGION_COUNT = 10

BLOB_MAGIC = b"AGFB"
BLOB_VERSION = 1
MANIFEST_FORMAT = "aesgraph-dataset"
MANIFEST_VERSION = 1


class DataFormatError(ValueError):
    """A dataset file is malformed, truncated, or inconsistent."""


@dataclass(frozen=True)
class RatingVotes:
    """Raw vote counts over the 10 score buckets."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != VOTE_BUCKETS:
            raise ValueError(f"expected {VOTE_BUCKETS} vote buckets, got {len(self.counts)}")
        if any(c < 0 or c != int(c) for c in self.counts):
            raise ValueError(f"vote counts must be non-negative integers, got {self.counts}")
        if sum(self.counts) <= 0:
            raise ValueError("vote counts must not all be zero")

    @property
    def total(self) -> int:
        return int(sum(self.counts))


def normalize_votes(votes) -> np.ndarray:
    """Normalized rating distribution: each count divided by the total."""
    if not isinstance(votes, RatingVotes):
        votes = RatingVotes(tuple(int(c) for c in votes))
    counts = np.array(votes.counts, dtype=np.float64)
    return counts / counts.sum()


@dataclass(frozen=True)
class RegionRecord:
    """One detected object region: box, labels, and its feature vector."""

    box: Box
    confidence: float
    category_label: str
    attribute_labels: tuple[str, ...]
    feature: np.ndarray
    padded: bool = False


@dataclass(frozen=True)
class ImageRecord:
    """One dataset sample with a global feature and 10 region records."""

    id: str
    width: int
    height: int
    semantic_category: str
    split: str
    global_feature: np.ndarray
    regions: tuple[RegionRecord, ...]
    votes: RatingVotes

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"record {self.id}: split must be 'train' or 'test', got {self.split!r}")
        if len(self.regions) != REGION_COUNT:
            raise ValueError(f"record {self.id}: expected {REGION_COUNT} regions, got {len(self.regions)}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"record {self.id}: width/height must be positive")

    @property
    def distribution(self) -> np.ndarray:
        return normalize_votes(self.votes)


@dataclass(frozen=True)
class DatasetManifest:
    """Header of a dataset manifest file."""

    version: int
    profile: str
    d_g: int
    d_r: int
    global_mode: str
    grid_cells: int
    record_count: int
    blob_bytes: int
    blob_sha256: str


def pad_regions(regions: list[RegionRecord]) -> list[RegionRecord]:
    """Pad a short region list to 10 by duplicating the most confident one.

    Duplicates are flagged ``padded``; exporters with fewer detections
    than 10 should call this before ``write_dataset``.
    """
    if not regions:
        raise ValueError("cannot pad an empty region list")
    if len(regions) > REGION_COUNT:
        raise ValueError(f"got {len(regions)} regions, expected at most {REGION_COUNT}")
    best = max(regions, key=lambda r: r.confidence)
    out = list(regions)
    while len(out) < REGION_COUNT:
        out.append(replace(best, padded=True))
    return out


def _infer_dims(records) -> tuple[int, int, str, int]:
    first = records[0]
    g = first.global_feature
    if g.ndim == 1:
        mode, d_g, cells = "narrow", g.shape[0], 1
    elif g.ndim == 2:
        mode, d_g, cells = "wide", g.shape[1], g.shape[0]
    else:
        raise DataFormatError(f"record {first.id}: global feature must be 1-D or 2-D, got shape {g.shape}")
    d_r = first.regions[0].feature.shape[0]
    return d_g, d_r, mode, cells


def _profile_name(d_g: int, d_r: int) -> str:
    for name, p in PROFILES.items():
        if (p.d_g, p.d_r) == (d_g, d_r):
            return name
    return "custom"


def _validate_record(rec: ImageRecord, d_g: int, d_r: int, mode: str, cells: int) -> None:
    g = rec.global_feature
    expected = (d_g,) if mode == "narrow" else (cells, d_g)
    if g.shape != expected:
        raise DataFormatError(f"record {rec.id}: global feature shape {g.shape}, expected {expected}")
    if not np.isfinite(g).all():
        raise DataFormatError(f"record {rec.id}: non-finite global feature values")
    for idx, region in enumerate(rec.regions):
        if region.feature.shape != (d_r,):
            raise DataFormatError(
                f"record {rec.id}: region {idx} feature length {region.feature.shape[0]}, expected {d_r}")
        if not np.isfinite(region.feature).all():
            raise DataFormatError(f"record {rec.id}: non-finite feature values in region {idx}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_dataset(records, manifest_path, blob_path) -> DatasetManifest:
    """Write records to a manifest/blob pair with a canonical byte layout.

    Deterministic for identical input: records keep their order and
    feature runs are laid out contiguously in record order (global run
    first, then the 10 region runs).
    """
    records = list(records)
    manifest_path, blob_path = Path(manifest_path), Path(blob_path)

    blob = bytearray()
    blob += BLOB_MAGIC + struct.pack("<I", BLOB_VERSION)
    lines = []

    if records:
        d_g, d_r, mode, cells = _infer_dims(records)
    else:
        d_g, d_r, mode, cells = 0, 0, "narrow", 1

    def append_run(values: np.ndarray) -> tuple[int, int]:
        offset = len(blob)
        payload = np.ascontiguousarray(values.reshape(-1), dtype="<f4")
        blob.extend(payload.tobytes())
        return offset, payload.size

    for rec in records:
        _validate_record(rec, d_g, d_r, mode, cells)
        g_off, g_len = append_run(rec.global_feature)
        regions = []
        for region in rec.regions:
            r_off, r_len = append_run(region.feature)
            box = region.box
            regions.append({
                "box": [box.x_tl, box.y_tl, box.x_br, box.y_br],
                "confidence": float(region.confidence),
                "label": region.category_label,
                "attributes": list(region.attribute_labels),
                "padded": region.padded,
                "offset": r_off,
                "length": r_len,
            })
        lines.append(_dump({
            "id": rec.id,
            "width": rec.width,
            "height": rec.height,
            "category": rec.semantic_category,
            "split": rec.split,
            "votes": list(rec.votes.counts),
            "global_offset": g_off,
            "global_length": g_len,
            "regions": regions,
        }))

    blob_bytes = bytes(blob)
    manifest = DatasetManifest(
        version=MANIFEST_VERSION,
        profile=_profile_name(d_g, d_r),
        d_g=d_g,
        d_r=d_r,
        global_mode=mode,
        grid_cells=cells,
        record_count=len(records),
        blob_bytes=len(blob_bytes),
        blob_sha256=hashlib.sha256(blob_bytes).hexdigest(),
    )
    header = _dump({
        "format": MANIFEST_FORMAT,
        "version": manifest.version,
        "profile": manifest.profile,
        "d_g": manifest.d_g,
        "d_r": manifest.d_r,
        "global_mode": manifest.global_mode,
        "grid_cells": manifest.grid_cells,
        "record_count": manifest.record_count,
        "blob_bytes": manifest.blob_bytes,
        "blob_sha256": manifest.blob_sha256,
    })

    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    blob_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text("\n".join([header] + lines) + "\n", encoding="utf-8")
    blob_path.write_bytes(blob_bytes)
    return manifest


def _parse_header(line: str) -> DatasetManifest:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest header is not valid JSON: {exc}") from exc
    if d.get("format") != MANIFEST_FORMAT:
        raise DataFormatError(f"unrecognized manifest format {d.get('format')!r}")
    if d.get("version") != MANIFEST_VERSION:
        raise DataFormatError(f"unsupported manifest version {d.get('version')!r}")
    return DatasetManifest(
        version=d["version"],
        profile=d["profile"],
        d_g=d["d_g"],
        d_r=d["d_r"],
        global_mode=d["global_mode"],
        grid_cells=d["grid_cells"],
        record_count=d["record_count"],
        blob_bytes=d["blob_bytes"],
        blob_sha256=d["blob_sha256"],
    )


def read_manifest(manifest_path) -> DatasetManifest:
    """Parse and validate only the manifest header line."""
    with open(manifest_path, "r", encoding="utf-8") as fh:
        return _parse_header(fh.readline())


def load_dataset(manifest_path, blob_path) -> list[ImageRecord]:
    """Load and fully validate a dataset written by ``write_dataset``."""
    manifest_path, blob_path = Path(manifest_path), Path(blob_path)
    lines = manifest_path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataFormatError(f"empty manifest {manifest_path}")
    manifest = _parse_header(lines[0])

    blob = blob_path.read_bytes()
    if len(blob) < 8 or blob[:4] != BLOB_MAGIC:
        raise DataFormatError(f"{blob_path} is not a feature blob (bad magic)")
    (blob_version,) = struct.unpack("<I", blob[4:8])
    if blob_version != BLOB_VERSION:
        raise DataFormatError(f"unsupported blob version {blob_version}")
    if len(blob) != manifest.blob_bytes:
        raise DataFormatError(f"blob length {len(blob)} does not match manifest ({manifest.blob_bytes})")
    if hashlib.sha256(blob).hexdigest() != manifest.blob_sha256:
        raise DataFormatError("blob checksum mismatch")

    body = lines[1:]
    if len(body) != manifest.record_count:
        raise DataFormatError(f"manifest lists {len(body)} records, header says {manifest.record_count}")

    runs: list[tuple[int, int, str]] = []

    def read_run(offset: int, length: int, rid: str) -> np.ndarray:
        end = offset + 4 * length
        if offset < 8 or end > len(blob):
            raise DataFormatError(f"record {rid}: feature run [{offset}, {end}) outside blob of {len(blob)} bytes")
        runs.append((offset, end, rid))
        return np.frombuffer(blob, dtype="<f4", count=length, offset=offset).astype(np.float64)

    records = []
    for lineno, line in enumerate(body, start=2):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"manifest line {lineno} is not valid JSON: {exc}") from exc
        rid = d["id"]
        g = read_run(d["global_offset"], d["global_length"], rid)
        if manifest.global_mode == "wide":
            if g.size != manifest.grid_cells * manifest.d_g:
                raise DataFormatError(f"record {rid}: wide global run of {g.size} values, "
                                      f"expected {manifest.grid_cells}x{manifest.d_g}")
            g = g.reshape(manifest.grid_cells, manifest.d_g)
        if len(d["regions"]) != REGION_COUNT:
            raise DataFormatError(f"record {rid}: expected {REGION_COUNT} regions, got {len(d['regions'])}")
        try:
            regions = []
            for r in d["regions"]:
                feature = read_run(r["offset"], r["length"], rid)
                box = Box(*[float(v) for v in r["box"]]).clamped()
                regions.append(RegionRecord(
                    box=box,
                    confidence=float(r["confidence"]),
                    category_label=r["label"],
                    attribute_labels=tuple(r["attributes"]),
                    feature=feature,
                    padded=bool(r["padded"]),
                ))
            votes = RatingVotes(tuple(int(v) for v in d["votes"]))
            rec = ImageRecord(
                id=rid,
                width=int(d["width"]),
                height=int(d["height"]),
                semantic_category=d["category"],
                split=d["split"],
                global_feature=g,
                regions=tuple(regions),
                votes=votes,
            )
        except DataFormatError:
            raise
        except ValueError as exc:
            raise DataFormatError(f"record {rid}: {exc}") from exc
        _validate_record(rec, manifest.d_g, manifest.d_r, manifest.global_mode, manifest.grid_cells)
        records.append(rec)

    runs.sort()
    for (s0, e0, r0), (s1, e1, r1) in zip(runs, runs[1:]):
        if s1 < e0:
            raise DataFormatError(f"overlapping feature runs for records {r0} and {r1}")
    return records


def dataset_paths(directory) -> tuple[Path, Path]:
    """Conventional manifest/blob file names inside a dataset directory."""
    d = Path(directory)
    return d / "manifest.jsonl", d / "features.bin"


@dataclass
class Batch:
    """Stacked numpy views of a list of records, ready for the model."""

    ids: list[str]
    regional: np.ndarray            # [B, L, d_r]
    global_feature: np.ndarray      # [B, d_g] narrow or [B, cells, d_g] wide
    boxes: list[list[Box]]          # B lists of L boxes
    distributions: np.ndarray       # [B, K]
    records: list[ImageRecord]

    def __len__(self) -> int:
        return len(self.ids)


def collate(records) -> Batch:
    """Stack a non-empty list of records into batched arrays."""
    records = list(records)
    if not records:
        raise ValueError("collate: empty record list")
    return Batch(
        ids=[r.id for r in records],
        regional=np.stack([np.stack([reg.feature for reg in r.regions]) for r in records]),
        global_feature=np.stack([r.global_feature for r in records]),
        boxes=[[reg.box for reg in r.regions] for r in records],
        distributions=np.stack([r.distribution for r in records]),
        records=records,
    )
