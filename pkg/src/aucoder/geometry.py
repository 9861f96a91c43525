"""Geometric normalisation of 68-point keypoint frames.

Two stages: a least-squares affine map estimated on six fixed anchor points
takes the whole face into a standard 200x200 space, then each face part with
anchors gets its own similarity map onto canonical anchor coordinates.  Lips
have no anchors and only receive the affine stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import N_KEYPOINTS, KeypointFrame


class DegenerateConfigurationError(ValueError):
    """Anchor points do not determine the requested transform."""


def _template_points() -> np.ndarray:
    pts = np.zeros((N_KEYPOINTS, 2))
    theta = np.pi - np.arange(17) * np.pi / 16
    pts[0:17, 0] = 100 + 80 * np.cos(theta)
    pts[0:17, 1] = 80 + 110 * np.sin(theta)
    pts[17:22] = [(40, 58), (52, 50), (64, 48), (76, 50), (88, 55)]
    pts[22:27] = [(112, 55), (124, 50), (136, 48), (148, 50), (160, 58)]
    pts[27:31] = [(100, 70), (100, 85), (100, 100), (100, 115)]
    pts[31:36] = [(85, 125), (92, 128), (100, 130), (108, 128), (115, 125)]
    pts[36:42] = [(50, 80), (60, 74), (72, 74), (82, 80), (72, 85), (60, 85)]
    pts[42:48] = [(118, 80), (128, 74), (140, 74), (150, 80), (140, 85), (128, 85)]
    pts[48:60] = [
        (72, 155), (82, 148), (92, 144), (100, 146), (108, 144), (118, 148),
        (128, 155), (118, 163), (108, 167), (100, 168), (92, 167), (82, 163),
    ]
    pts[60:68] = [(76, 155), (90, 151), (100, 152), (110, 151), (124, 155), (110, 158), (100, 159), (90, 158)]
    return pts


#: Neutral template face in the 200x200 standard space (image coordinates, y down).
TEMPLATE_POINTS = _template_points()
TEMPLATE_POINTS.setflags(write=False)


@dataclass(frozen=True)
class PartGroup:
    name: str
    anchors: tuple[int, ...]  # 0, 1 or 2 template indices
    members: tuple[int, ...]
    canonical: np.ndarray  # (len(anchors), 2)


@dataclass(frozen=True)
class AnchorSet:
    name: str
    affine_anchors: tuple[int, ...]
    canonical_affine: np.ndarray  # (6, 2)
    part_groups: tuple[PartGroup, ...]

    def __post_init__(self):
        if len(set(self.affine_anchors)) != len(self.affine_anchors):
            raise ValueError(f"anchor set {self.name!r}: affine anchors must be distinct")
        if self.canonical_affine.shape != (len(self.affine_anchors), 2):
            raise ValueError(f"anchor set {self.name!r}: one canonical point per affine anchor")
        seen: set[int] = set()
        for g in self.part_groups:
            if len(g.anchors) > 2:
                raise ValueError(f"part group {g.name!r}: at most two similarity anchors")
            if seen & set(g.members):
                raise ValueError(f"part group {g.name!r} overlaps another group")
            seen |= set(g.members)


_DEFAULT_GROUPS = (
    ("left_eye_brow", (42, 45), tuple(range(22, 27)) + tuple(range(42, 48))),
    ("right_eye_brow", (36, 39), tuple(range(17, 22)) + tuple(range(36, 42))),
    ("nose", (27,), tuple(range(27, 36))),
    ("jaw", (0, 16), tuple(range(0, 17))),
    ("lips", (), tuple(range(48, 68))),
)


def make_anchor_set(name, affine_anchors, groups=_DEFAULT_GROUPS, template=TEMPLATE_POINTS) -> AnchorSet:
    """Build an anchor set whose canonical coordinates are read off ``template``."""
    template = np.asarray(template, dtype=float)
    part_groups = tuple(
        PartGroup(g, tuple(a), tuple(m), template[list(a)].reshape(len(a), 2).copy()) for g, a, m in groups
    )
    affine_anchors = tuple(affine_anchors)
    return AnchorSet(name, affine_anchors, template[list(affine_anchors)].copy(), part_groups)


BUILTIN_ANCHOR_SETS = {
    "disfa_ck": make_anchor_set("disfa_ck", (0, 16, 39, 42, 27, 33)),
    "bp4d": make_anchor_set("bp4d", (39, 42, 36, 45, 27, 33)),
}


def load_anchor_set(ref: str | Path) -> AnchorSet:
    """Resolve a built-in anchor set or read one from JSON.

    JSON layout::

        {"name": ..., "affine_anchors": [6 ints], "canonical_affine": [[x, y], ...],
         "part_groups": [{"name": ..., "anchors": [...], "members": [...],
                          "canonical": [[x, y], ...]}, ...]}
    """
    if str(ref) in BUILTIN_ANCHOR_SETS:
        return BUILTIN_ANCHOR_SETS[str(ref)]
    with open(ref) as fh:
        doc = json.load(fh)
    groups = tuple(
        PartGroup(
            g["name"],
            tuple(int(a) for a in g["anchors"]),
            tuple(int(m) for m in g["members"]),
            np.asarray(g.get("canonical", []), dtype=float).reshape(len(g["anchors"]), 2),
        )
        for g in doc["part_groups"]
    )
    return AnchorSet(
        doc["name"],
        tuple(int(a) for a in doc["affine_anchors"]),
        np.asarray(doc["canonical_affine"], dtype=float),
        groups,
    )


def anchor_set_to_json(anchors: AnchorSet) -> dict:
    return {
        "name": anchors.name,
        "affine_anchors": list(anchors.affine_anchors),
        "canonical_affine": anchors.canonical_affine.tolist(),
        "part_groups": [
            {"name": g.name, "anchors": list(g.anchors), "members": list(g.members), "canonical": g.canonical.tolist()}
            for g in anchors.part_groups
        ],
    }


@dataclass(frozen=True)
class AffineParams:
    A: np.ndarray  # (2, 2)
    t: np.ndarray  # (2,)
    residual: float = 0.0  # sum of squared anchor misfits

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.A.T + self.t


@dataclass(frozen=True)
class SimilarityParams:
    scale: float
    theta: float
    t: np.ndarray
    degenerate: bool = False  # translation-only

    @property
    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        if self.degenerate:
            return points + self.t
        return points @ self.matrix.T + self.t


def estimate_affine(src: np.ndarray, dst: np.ndarray) -> AffineParams:
    """Least-squares affine map ``A @ src_i + t ~ dst_i``.

    Solved with ``numpy.linalg.lstsq`` (SVD based) on the ``[x, y, 1]`` design;
    rank below three means the anchors are collinear or coincident.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must be matching (n, 2) arrays")
    # centre and scale the source first: far-off-origin coordinates otherwise
    # cost several digits through the constant column
    mu = src.mean(axis=0)
    spread = float(np.sqrt(np.mean(np.sum((src - mu) ** 2, axis=1))))
    if spread == 0.0:
        raise DegenerateConfigurationError("affine anchors are collinear or coincident")
    design = np.hstack([(src - mu) / spread, np.ones((len(src), 1))])
    sol, _, rank, _ = np.linalg.lstsq(design, dst, rcond=None)
    if rank < 3:
        raise DegenerateConfigurationError("affine anchors are collinear or coincident")
    A = sol[:2].T / spread
    t = sol[2] - A @ mu
    residual = float(np.sum((design @ sol - dst) ** 2))
    return AffineParams(A, t, residual)


def apply_affine(params: AffineParams, frame: KeypointFrame) -> KeypointFrame:
    pts = np.zeros_like(frame.points)
    pts[frame.mask] = params.apply(frame.points[frame.mask])
    return frame.with_points(pts)


def estimate_similarity(src: np.ndarray, dst: np.ndarray) -> SimilarityParams:
    """Exact similarity from two anchor pairs, or a translation from one."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if src.shape != dst.shape:
        raise ValueError("src and dst anchors must match")
    if len(src) == 1:
        return SimilarityParams(1.0, 0.0, dst[0] - src[0], degenerate=True)
    if len(src) != 2:
        raise ValueError("similarity registration takes one or two anchors")
    zs = src[:, 0] + 1j * src[:, 1]
    zd = dst[:, 0] + 1j * dst[:, 1]
    span = zs[1] - zs[0]
    if span == 0:
        raise DegenerateConfigurationError("coincident similarity anchors")
    a = (zd[1] - zd[0]) / span
    b = zd[0] - a * zs[0]
    return SimilarityParams(float(abs(a)), float(np.angle(a)), np.array([b.real, b.imag]))


def register_frame(frame: KeypointFrame, anchors: AnchorSet, fallback: AnchorSet | None = None) -> KeypointFrame:
    """Affine registration on the six anchors, then per-part similarity registration.

    Part groups whose anchors are not all present in the frame's mask are
    left at the affine stage (e.g. the jaw group on a 49-point layout).
    """
    idx = list(anchors.affine_anchors)
    if not frame.mask[idx].all():
        if fallback is not None:
            return register_frame(frame, fallback)
        missing = [i for i in idx if not frame.mask[i]]
        raise DegenerateConfigurationError(
            f"affine anchors {missing} absent in this layout; use a different anchor set"
        )
    out = apply_affine(estimate_affine(frame.points[idx], anchors.canonical_affine), frame)
    pts = out.points.copy()
    for group in anchors.part_groups:
        if not group.anchors or not frame.mask[list(group.anchors)].all():
            continue
        members = [m for m in group.members if frame.mask[m]]
        sim = estimate_similarity(pts[list(group.anchors)], group.canonical)
        pts[members] = sim.apply(pts[members])
    return out.with_points(pts)


def similarity_transform(points: np.ndarray, scale: float, theta: float, t) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    R = scale * np.array([[c, -s], [s, c]])
    return points @ R.T + np.asarray(t, dtype=float)
