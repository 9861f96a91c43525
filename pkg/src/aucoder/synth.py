"""Synthetic keypoint datasets with a known displacement basis.

Each expression frame is ``neutral + U @ w`` in the standard space, with
``U`` a (136, n_bases) orthonormal basis and ``w`` sparse (a few bases per
frame).  Isotropic Gaussian jitter is added to non-anchor keypoints of
expression frames, then every frame (neutral included) is moved by a random
in-plane similarity standing in for head pose, face size and position.
Anchor keypoints carry neither signal nor jitter, so registration undoes the
nuisance transform exactly and the features are ``U @ w + jitter``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .geometry import BUILTIN_ANCHOR_SETS, TEMPLATE_POINTS, similarity_transform
from .io import (
    BUILTIN_TEMPLATE_MAPS,
    N_FEATURES,
    N_KEYPOINTS,
    DatasetManifest,
    SubjectEntry,
    write_json,
    write_keypoint_file,
    write_manifest,
    write_matrix_csv,
)

ANCHOR_KEYPOINTS = sorted(
    {i for s in BUILTIN_ANCHOR_SETS.values() for i in s.affine_anchors}
    | {i for s in BUILTIN_ANCHOR_SETS.values() for g in s.part_groups for i in g.anchors}
)

LAYOUT_ANCHORS = {"ckplus": "disfa_ck", "disfa": "disfa_ck", "bp4d": "bp4d"}

PURE_AU_LABELS = (
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU11", "AU12", "AU13", "AU14", "AU15",
    "AU16", "AU17", "AU18", "AU20", "AU22", "AU23", "AU24", "AU25", "AU26", "AU27", "AU28", "AU43", "AU45",
)


@dataclass
class SynthConfig:
    n_subjects: int = 3
    frames_per_subject: int = 5  # including the neutral frame
    n_bases: int = 8
    active_per_frame: int = 3
    amplitude: float = 20.0  # weight std of the strongest basis, standard-space px
    noise: float = 0.01  # jitter energy as a fraction of expected signal energy
    shape_jitter: float = 2.0  # per-subject neutral shape variation, px
    max_rotation: float = 0.35  # radians
    scale_range: tuple[float, float] = (0.6, 1.8)
    max_translation: float = 300.0
    seed: int = 0


def signal_rows(layout_mask: np.ndarray | None = None) -> np.ndarray:
    """Feature rows that may carry signal: present, non-anchor keypoints."""
    kp = np.ones(N_KEYPOINTS, dtype=bool) if layout_mask is None else np.asarray(layout_mask, dtype=bool).copy()
    kp[ANCHOR_KEYPOINTS] = False
    return np.repeat(kp, 2)


def true_basis(n_bases: int, seed: int) -> np.ndarray:
    """Random orthonormal (136, n_bases) basis vanishing on anchor keypoints."""
    rng = np.random.default_rng([seed, 1])
    rows = np.flatnonzero(signal_rows())
    q, r = np.linalg.qr(rng.standard_normal((len(rows), n_bases)))
    q = q * np.sign(np.diag(r))
    U = np.zeros((N_FEATURES, n_bases))
    U[rows] = q
    return U


def basis_scales(cfg: SynthConfig) -> np.ndarray:
    return cfg.amplitude * np.linspace(1.0, 0.3, cfg.n_bases)


def expected_signal_energy(cfg: SynthConfig) -> float:
    """E||U w||^2 per expression frame."""
    return float(cfg.active_per_frame / cfg.n_bases * np.sum(basis_scales(cfg) ** 2))


def noise_std(cfg: SynthConfig) -> float:
    n_coords = int(signal_rows().sum())
    return float(np.sqrt(cfg.noise * expected_signal_energy(cfg) / n_coords))


def noise_limited_ve(cfg: SynthConfig, layout_mask: np.ndarray | None = None, k: int | None = None) -> float:
    """Expected Train VE of the true k-basis: signal plus its k/d share of isotropic jitter."""
    k = cfg.n_bases if k is None else k
    rows = signal_rows(layout_mask)
    d = int(rows.sum())
    U = true_basis(cfg.n_bases, cfg.seed)
    # fraction of each basis' energy that survives the layout mask
    kept = np.sum(U[rows] ** 2, axis=0)
    scales = basis_scales(cfg) ** 2 * cfg.active_per_frame / cfg.n_bases
    S = float(np.sum(scales * kept))
    N = d * noise_std(cfg) ** 2
    return 100.0 * (S + N * k / d) / (S + N)


def _subject_neutral(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    offset = cfg.shape_jitter * rng.standard_normal((N_KEYPOINTS, 2))
    offset[ANCHOR_KEYPOINTS] = 0.0
    return TEMPLATE_POINTS + offset


def _nuisance(rng: np.random.Generator, cfg: SynthConfig, points: np.ndarray) -> np.ndarray:
    scale = rng.uniform(*cfg.scale_range)
    theta = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
    t = rng.uniform(-cfg.max_translation, cfg.max_translation, size=2)
    return similarity_transform(points, scale, theta, t)


def generate_frames(cfg: SynthConfig, stream: int = 0):
    """Yield ``(subject_id, neutral_index, [68x2 raw frames], weights)`` per subject."""
    U = true_basis(cfg.n_bases, cfg.seed)
    scales = basis_scales(cfg)
    sigma = noise_std(cfg)
    noisy = signal_rows().reshape(N_KEYPOINTS, 2)
    rng = np.random.default_rng([cfg.seed, 2, stream])
    for s in range(cfg.n_subjects):
        neutral = _subject_neutral(rng, cfg)
        neutral_idx = int(rng.integers(cfg.frames_per_subject))
        frames, weights = [], []
        for f in range(cfg.frames_per_subject):
            if f == neutral_idx:
                pts = neutral
                w = np.zeros(cfg.n_bases)
            else:
                w = np.zeros(cfg.n_bases)
                on = rng.choice(cfg.n_bases, size=cfg.active_per_frame, replace=False)
                w[on] = scales[on] * rng.standard_normal(cfg.active_per_frame)
                pts = neutral + (U @ w).reshape(N_KEYPOINTS, 2)
                pts = pts + np.where(noisy, sigma * rng.standard_normal((N_KEYPOINTS, 2)), 0.0)
            frames.append(_nuisance(rng, cfg, pts))
            weights.append(w)
        yield f"S{s:03d}", neutral_idx, frames, np.column_stack(weights)


def write_dataset(out_dir: str | Path, layout: str, cfg: SynthConfig, stream: int = 0) -> Path:
    """Write native-layout keypoint CSVs plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    tmap = BUILTIN_TEMPLATE_MAPS[layout]
    subjects = []
    for sid, neutral_idx, frames, _ in generate_frames(cfg, stream):
        (out_dir / sid).mkdir(parents=True, exist_ok=True)
        paths = []
        for i, pts in enumerate(frames):
            rel = Path(sid) / f"frame_{i:04d}.csv"
            write_keypoint_file(tmap.from_template(pts), out_dir / rel)
            paths.append(rel)
        subjects.append(SubjectEntry(sid, neutral_idx, tuple(paths)))
    manifest = DatasetManifest(layout, layout, LAYOUT_ANCHORS[layout], tuple(subjects), out_dir)
    path = out_dir / "manifest.json"
    write_manifest(manifest, path)
    return path


def au_atoms(seed: int, n: int = len(PURE_AU_LABELS), amplitude: float = 6.0) -> np.ndarray:
    """Local displacement fields: each atom moves one small cluster of non-anchor keypoints."""
    rng = np.random.default_rng([seed, 3])
    movable = np.array([k for k in range(N_KEYPOINTS) if k not in ANCHOR_KEYPOINTS])
    atoms = np.zeros((N_FEATURES, n))
    for j in range(n):
        centre = TEMPLATE_POINTS[rng.choice(movable)]
        dist = np.linalg.norm(TEMPLATE_POINTS[movable] - centre, axis=1)
        near = movable[np.argsort(dist, kind="stable")[: rng.integers(3, 7)]]
        direction = rng.standard_normal(2)
        direction /= np.linalg.norm(direction)
        field = np.zeros((N_KEYPOINTS, 2))
        field[near] = amplitude * rng.uniform(0.5, 1.0, size=(len(near), 1)) * direction
        atoms[:, j] = field.reshape(-1)
    return atoms


def write_au_set(out_dir: str | Path, cfg: SynthConfig) -> dict[str, list[Path]]:
    """Write a neutral face plus 26 pure and 113 combination AU apex files."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng([cfg.seed, 4])
    neutral = TEMPLATE_POINTS.copy()
    pure = au_atoms(cfg.seed)
    pairs = list(combinations(range(pure.shape[1]), 2))
    picks = sorted(rng.choice(len(pairs), size=113 - pure.shape[1], replace=False))
    comb = np.hstack([pure, np.column_stack([pure[:, a] + pure[:, b] for a, b in (pairs[i] for i in picks)])])
    comb_labels = list(PURE_AU_LABELS) + [f"{PURE_AU_LABELS[a]}+{PURE_AU_LABELS[b]}" for a, b in (pairs[i] for i in picks)]

    written: dict[str, list[Path]] = {}
    for kind, atoms, labels in (("pure", pure, PURE_AU_LABELS), ("comb", comb, comb_labels)):
        (out_dir / kind).mkdir(parents=True, exist_ok=True)
        paths = []
        for j, label in enumerate(labels):
            apex = neutral + atoms[:, j].reshape(N_KEYPOINTS, 2)
            p = out_dir / kind / f"{j:03d}_{label}.csv"
            write_keypoint_file(_nuisance(rng, cfg, apex), p)
            paths.append(p)
        written[kind] = paths
    write_keypoint_file(_nuisance(rng, cfg, neutral), out_dir / "neutral.csv")
    return written


def write_synthetic_suite(out_dir: str | Path, cfg: SynthConfig) -> dict:
    """All three layouts, the AU sets and the ground-truth basis under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifests = {
        layout: str(write_dataset(out_dir / layout, layout, cfg, stream=i).relative_to(out_dir))
        for i, layout in enumerate(("disfa", "bp4d", "ckplus"))
    }
    write_au_set(out_dir / "au", cfg)
    write_matrix_csv(true_basis(cfg.n_bases, cfg.seed), out_dir / "true_basis.csv")
    doc = {"config": asdict(cfg), "manifests": manifests, "noise_std": noise_std(cfg)}
    write_json(doc, out_dir / "synth.json")
    return doc
