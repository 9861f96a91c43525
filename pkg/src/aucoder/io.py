"""Keypoint ingestion, template remapping and matrix/sidecar persistence.

Every dataset is stored in the 68-slot template layout (iBUG ordering:
0-16 jawline, 17-26 eyebrows, 27-35 nose, 36-47 eyes, 48-67 lips).  Slots a
dataset does not track natively are zero-filled and carried as ``False`` in a
presence mask.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

N_KEYPOINTS = 68
N_FEATURES = 2 * N_KEYPOINTS


class KeypointFileError(ValueError):
    """A keypoint, manifest or matrix file is malformed."""


@dataclass(frozen=True)
class TemplateMap:
    dataset_id: str
    index_map: tuple[tuple[int, int], ...]

    def __post_init__(self):
        src = [s for s, _ in self.index_map]
        dst = [t for _, t in self.index_map]
        if len(set(src)) != len(src):
            raise ValueError(f"template map {self.dataset_id!r}: duplicate source index")
        if len(set(dst)) != len(dst):
            raise ValueError(f"template map {self.dataset_id!r}: duplicate template index")
        if any(t < 0 or t >= N_KEYPOINTS for t in dst):
            raise ValueError(f"template map {self.dataset_id!r}: template index outside 0..67")
        if sorted(src) != list(range(len(src))):
            raise ValueError(f"template map {self.dataset_id!r}: source indices must be 0..n-1")

    @property
    def native_count(self) -> int:
        return len(self.index_map)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(N_KEYPOINTS, dtype=bool)
        m[[t for _, t in self.index_map]] = True
        return m

    def to_template(self, native: np.ndarray) -> np.ndarray:
        """Scatter a ``(native_count, 2)`` array into a zero-filled ``(68, 2)`` array."""
        out = np.zeros((N_KEYPOINTS, 2))
        src = np.array([s for s, _ in self.index_map])
        dst = np.array([t for _, t in self.index_map])
        out[dst] = native[src]
        return out

    def from_template(self, points: np.ndarray) -> np.ndarray:
        src = np.array([s for s, _ in self.index_map])
        dst = np.array([t for _, t in self.index_map])
        native = np.empty((self.native_count, 2))
        native[src] = points[dst]
        return native


def _from_slots(dataset_id: str, slots: Sequence[int]) -> TemplateMap:
    return TemplateMap(dataset_id, tuple((i, t) for i, t in enumerate(slots)))


# 66-point layout: the 68-point template without the inner-lip corners 60, 64.
_DISFA_SLOTS = [t for t in range(N_KEYPOINTS) if t not in (60, 64)]
# 49-point layout: no jawline and no inner-lip corners.
_BP4D_SLOTS = [t for t in range(17, N_KEYPOINTS) if t not in (60, 64)]

BUILTIN_TEMPLATE_MAPS = {
    "disfa": _from_slots("disfa", _DISFA_SLOTS),
    "bp4d": _from_slots("bp4d", _BP4D_SLOTS),
    "ckplus": _from_slots("ckplus", range(N_KEYPOINTS)),
}


def load_template_map(ref: str | Path) -> TemplateMap:
    """Resolve a built-in map id, or read a JSON map file.

    The JSON form is ``{"dataset_id": ..., "index_map": [[source, template], ...]}``.
    """
    if str(ref) in BUILTIN_TEMPLATE_MAPS:
        return BUILTIN_TEMPLATE_MAPS[str(ref)]
    with open(ref) as fh:
        doc = json.load(fh)
    return TemplateMap(doc["dataset_id"], tuple((int(s), int(t)) for s, t in doc["index_map"]))


@dataclass(frozen=True)
class KeypointFrame:
    subject_id: str
    frame_index: int
    points: np.ndarray  # (68, 2)
    mask: np.ndarray  # (68,) bool, True = non-redundant

    def __post_init__(self):
        if self.points.shape != (N_KEYPOINTS, 2):
            raise ValueError(f"expected (68, 2) points, got {self.points.shape}")
        if self.mask.shape != (N_KEYPOINTS,):
            raise ValueError(f"expected 68 mask entries, got {self.mask.shape}")
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")

    def with_points(self, points: np.ndarray) -> KeypointFrame:
        return KeypointFrame(self.subject_id, self.frame_index, points, self.mask)


@dataclass(frozen=True)
class SubjectEntry:
    subject_id: str
    neutral_frame: int
    frames: tuple[Path, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(Path(f) for f in self.frames))


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    template_map_id: str
    anchor_set_id: str
    subjects: tuple[SubjectEntry, ...]
    base_dir: Path = field(default=Path("."))

    def __post_init__(self):
        seen = set()
        for s in self.subjects:
            if s.subject_id in seen:
                raise KeypointFileError(f"manifest lists subject {s.subject_id!r} twice")
            seen.add(s.subject_id)
            if not 0 <= s.neutral_frame < len(s.frames):
                raise KeypointFileError(
                    f"subject {s.subject_id!r}: neutral frame {s.neutral_frame} "
                    f"not among its {len(s.frames)} frame files"
                )

    def neutral_index(self, subject_id: str) -> int:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s.neutral_frame
        raise KeyError(subject_id)

    def resolve(self, path: Path) -> Path:
        return path if path.is_absolute() else self.base_dir / path


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a dataset manifest; frame paths are relative to the manifest's directory."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    try:
        subjects = tuple(
            SubjectEntry(str(s["id"]), int(s["neutral_frame"]), tuple(Path(f) for f in s["frames"]))
            for s in doc["subjects"]
        )
        return DatasetManifest(
            dataset_id=str(doc["dataset_id"]),
            template_map_id=str(doc["template_map"]),
            anchor_set_id=str(doc["anchor_set"]),
            subjects=subjects,
            base_dir=path.parent,
        )
    except KeyError as exc:
        raise KeypointFileError(f"{path}: manifest missing field {exc}") from None


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "dataset_id": manifest.dataset_id,
        "template_map": manifest.template_map_id,
        "anchor_set": manifest.anchor_set_id,
        "subjects": [
            {"id": s.subject_id, "neutral_frame": s.neutral_frame, "frames": [str(f) for f in s.frames]}
            for s in manifest.subjects
        ],
    }
    write_json(doc, path)


def read_keypoint_file(path: str | Path, expected_rows: int | None = None) -> np.ndarray:
    """Read a native keypoint CSV (one ``x,y`` row per keypoint)."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise KeypointFileError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                xy = [float(c) for c in row]
            except ValueError:
                raise KeypointFileError(f"{path}:{lineno}: unparseable coordinate {row!r}") from None
            if not all(np.isfinite(xy)):
                raise KeypointFileError(f"{path}:{lineno}: non-finite coordinate")
            rows.append(xy)
    if expected_rows is not None and len(rows) != expected_rows:
        raise KeypointFileError(f"{path}: expected {expected_rows} keypoints, found {len(rows)}")
    return np.array(rows, dtype=float).reshape(-1, 2)


def write_keypoint_file(points: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        for x, y in points:
            fh.write(f"{float(x):.17g},{float(y):.17g}\n")


def load_frames(manifest: DatasetManifest, template_map: TemplateMap) -> list[KeypointFrame]:
    """Load every frame named in ``manifest`` and remap it into the 68-slot template.

    Frame indices are positions in each subject's frame list.
    """
    frames = []
    mask = template_map.mask
    for subject in manifest.subjects:
        for idx, rel in enumerate(subject.frames):
            path = manifest.resolve(rel)
            if not path.exists():
                raise FileNotFoundError(f"missing keypoint file: {path}")
            native = read_keypoint_file(path, template_map.native_count)
            frames.append(KeypointFrame(subject.subject_id, idx, template_map.to_template(native), mask.copy()))
    return frames


@dataclass(frozen=True)
class AuKeypointSet:
    """Raw AU apex frames plus the shared neutral frame, before preprocessing."""

    apex: tuple[KeypointFrame, ...]
    neutral: KeypointFrame
    labels: tuple[str, ...]


def load_au_dictionary(
    paths: Sequence[str | Path], neutral_path: str | Path, labels: Sequence[str] | None = None
) -> AuKeypointSet:
    """Read 68-point AU apex files and their neutral frame.

    Labels default to the file stems.  The result is turned into an
    :class:`~aucoder.features.AuDictionary` by
    :func:`aucoder.features.build_au_dictionary`.
    """
    if len(paths) == 0:
        raise KeypointFileError("empty dictionary")
    if labels is None:
        labels = [Path(p).stem for p in paths]
    if len(labels) != len(paths):
        raise ValueError("one label per AU file required")
    if neutral_path is None or not Path(neutral_path).exists():
        raise FileNotFoundError(f"missing neutral AU file: {neutral_path}")
    full = np.ones(N_KEYPOINTS, dtype=bool)
    neutral = KeypointFrame("au", 0, read_keypoint_file(neutral_path, N_KEYPOINTS), full)
    apex = tuple(
        KeypointFrame("au", i + 1, read_keypoint_file(p, N_KEYPOINTS), full.copy()) for i, p in enumerate(paths)
    )
    return AuKeypointSet(apex, neutral, tuple(labels))


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    """Write a 2-D array as headerless CSV, 17 significant digits (exact round trip)."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-D")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix has non-finite entries")
    with open(path, "w", newline="") as fh:
        for row in matrix:
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if rows and len(row) != len(rows[0]):
                raise KeypointFileError(
                    f"{path}:{lineno}: ragged row ({len(row)} columns, expected {len(rows[0])})"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise KeypointFileError(f"{path}:{lineno}: unparseable value") from None
    if not rows:
        raise KeypointFileError(f"{path}: empty matrix file")
    return np.array(rows, dtype=float)


def write_json(doc, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str | Path):
    with open(path) as fh:
        return json.load(fh)
