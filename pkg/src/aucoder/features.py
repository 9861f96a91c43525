"""Neutral-relative displacement features and AU dictionaries.

Keypoint ``k`` occupies rows ``2k`` (dx) and ``2k + 1`` (dy) of every
136-row matrix.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import AnchorSet, register_frame
from .io import (
    N_FEATURES,
    AuKeypointSet,
    DatasetManifest,
    KeypointFrame,
    read_json,
    read_matrix_csv,
    write_json,
    write_matrix_csv,
)

#: Documented subsampling algorithm, recorded in sidecars.
SUBSAMPLE_ALGORITHM = "numpy.random.Generator(PCG64(seed)).random(m); argsort(stable)[:count]; sorted"


def row_mask_from_keypoints(mask: np.ndarray) -> np.ndarray:
    return np.repeat(np.asarray(mask, dtype=bool), 2)


def displacement(frame: KeypointFrame, neutral: KeypointFrame) -> np.ndarray:
    return (frame.points - neutral.points).reshape(-1)


@dataclass(frozen=True)
class FeatureMatrix:
    data: np.ndarray  # (136, m)
    row_mask: np.ndarray  # (136,) bool
    column_meta: tuple[tuple[str, int], ...]
    dataset_id: str = ""
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != N_FEATURES:
            raise ValueError(f"feature matrix must have {N_FEATURES} rows, got shape {self.data.shape}")
        if self.data.shape[1] < 1:
            raise ValueError("feature matrix needs at least one column")
        if self.row_mask.shape != (N_FEATURES,):
            raise ValueError("row_mask must have 136 entries")
        if len(self.column_meta) != self.data.shape[1]:
            raise ValueError("one column_meta entry per column required")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature matrix has non-finite entries")

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        """Write ``<path>`` as matrix CSV and ``<path>.json`` as the sidecar."""
        path = Path(path)
        write_matrix_csv(self.data, path)
        doc = {
            "type": "feature_matrix",
            "dataset_id": self.dataset_id,
            "row_mask": [bool(b) for b in self.row_mask],
            "column_meta": [[s, int(f)] for s, f in self.column_meta],
            **self.metadata,
            **(extra or {}),
        }
        write_json(doc, sidecar_path(path))

    @classmethod
    def load(cls, path: str | Path) -> FeatureMatrix:
        path = Path(path)
        doc = read_json(sidecar_path(path))
        data = read_matrix_csv(path)
        meta = {k: v for k, v in doc.items() if k not in ("type", "dataset_id", "row_mask", "column_meta")}
        return cls(
            data,
            np.array(doc["row_mask"], dtype=bool),
            tuple((str(s), int(f)) for s, f in doc["column_meta"]),
            doc.get("dataset_id", ""),
            meta,
        )


@dataclass(frozen=True)
class AuDictionary:
    columns: np.ndarray  # (136, c)
    labels: tuple[str, ...]
    row_mask: np.ndarray
    kind: str = "pure"  # pure | comb | custom

    def __post_init__(self):
        if self.columns.ndim != 2 or self.columns.shape[0] != N_FEATURES:
            raise ValueError("dictionary must have 136 rows")
        if self.columns.shape[1] != len(self.labels):
            raise ValueError("one label per dictionary column required")
        if not np.all(np.isfinite(self.columns)):
            raise ValueError("dictionary has non-finite entries")

    @property
    def c(self) -> int:
        return self.columns.shape[1]

    @property
    def dictionary_id(self) -> str:
        return f"au_{self.kind}_{self.c}"

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        path = Path(path)
        write_matrix_csv(self.columns, path)
        doc = {
            "type": "au_dictionary",
            "kind": self.kind,
            "labels": list(self.labels),
            "row_mask": [bool(b) for b in self.row_mask],
            **(extra or {}),
        }
        write_json(doc, sidecar_path(path))

    @classmethod
    def load(cls, path: str | Path) -> AuDictionary:
        path = Path(path)
        doc = read_json(sidecar_path(path))
        return cls(read_matrix_csv(path), tuple(doc["labels"]), np.array(doc["row_mask"], dtype=bool), doc["kind"])


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def build_features(frames: Sequence[KeypointFrame], manifest: DatasetManifest) -> FeatureMatrix:
    """Stack ``frame - neutral`` displacements for every non-neutral frame.

    Columns are ordered by (subject_id, frame_index) regardless of input order.
    Frames are expected to be registered already.
    """
    if not frames:
        raise ValueError("no frames")
    mask = frames[0].mask
    by_subject: dict[str, list[KeypointFrame]] = defaultdict(list)
    for f in frames:
        if not np.array_equal(f.mask, mask):
            raise ValueError(f"mask mismatch in subject {f.subject_id!r} frame {f.frame_index}")
        by_subject[f.subject_id].append(f)

    cols, meta = [], []
    for subject_id in sorted(by_subject):
        try:
            neutral_idx = manifest.neutral_index(subject_id)
        except KeyError:
            raise ValueError(f"subject {subject_id!r} not in manifest") from None
        neutrals = [f for f in by_subject[subject_id] if f.frame_index == neutral_idx]
        if not neutrals:
            raise ValueError(f"subject {subject_id!r} has no neutral frame")
        neutral = neutrals[0]
        if any(not np.array_equal(n.points, neutral.points) for n in neutrals[1:]):
            raise ValueError(f"subject {subject_id!r} has conflicting neutral frames")
        others = sorted((f for f in by_subject[subject_id] if f.frame_index != neutral_idx), key=lambda f: f.frame_index)
        for f in others:
            cols.append(displacement(f, neutral))
            meta.append((subject_id, f.frame_index))
    if not cols:
        raise ValueError("no non-neutral frames to build features from")
    return FeatureMatrix(
        np.column_stack(cols),
        row_mask_from_keypoints(mask),
        tuple(meta),
        manifest.dataset_id,
        {"neutral_excluded": True},
    )


def build_au_dictionary(
    au: AuKeypointSet, anchors: AnchorSet, kind: str = "pure", register: bool = True
) -> AuDictionary:
    """Register AU apex frames and their neutral, then take apex - neutral per column."""
    frames = (au.neutral,) + au.apex
    if len({f.subject_id for f in frames}) != 1:
        raise ValueError("AU frames must come from a single subject")
    if register:
        frames = tuple(register_frame(f, anchors) for f in frames)
    neutral, apex = frames[0], frames[1:]
    cols = np.column_stack([displacement(f, neutral) for f in apex])
    return AuDictionary(cols, tuple(au.labels), row_mask_from_keypoints(neutral.mask), kind)


def subsample_indices(m: int, count: int, seed: int) -> np.ndarray:
    if count > m:
        raise ValueError(f"cannot sample {count} columns from {m}")
    if count < 1:
        raise ValueError("count must be positive")
    u = np.random.Generator(np.random.PCG64(seed)).random(m)
    return np.sort(np.argsort(u, kind="stable")[:count])


def subsample_columns(X: FeatureMatrix, count: int, seed: int) -> FeatureMatrix:
    """Uniform column sample without replacement; kept columns retain their order."""
    idx = subsample_indices(X.m, count, seed)
    meta = dict(X.metadata)
    meta.update({"subsample_seed": seed, "subsample_count": count, "subsample_algorithm": SUBSAMPLE_ALGORITHM})
    return FeatureMatrix(
        X.data[:, idx], X.row_mask.copy(), tuple(X.column_meta[i] for i in idx), X.dataset_id, meta
    )
