"""PCA action units: uncentred truncated SVD of the feature matrix.

Features are already displacements from a neutral face, so no mean is
removed; a test matrix is reconstructed as ``U @ U.T @ Y`` on the keypoints
present in both training and test layouts.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureMatrix, sidecar_path
from .io import N_FEATURES, read_json, read_matrix_csv, write_json, write_matrix_csv
from .metrics import VeReport, variance_explained

SIGN_CONVENTION = "max-abs-positive, lowest-row tiebreak"

# slack when comparing cumulative VE against a target, in percentage points
TARGET_VE_SLACK = 1e-9


class DegenerateDataError(ValueError):
    """Training data has no variance to decompose."""


@dataclass(frozen=True)
class PcaModel:
    basis: np.ndarray  # U, (136, k) orthonormal columns
    singular_values: np.ndarray  # (k,) non-increasing
    train_row_mask: np.ndarray
    train_dataset_id: str = ""
    total_energy: float = 0.0  # ||X||_F^2 of the training data
    all_singular_values: np.ndarray | None = None  # full spectrum, for k selection

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def dictionary_id(self) -> str:
        return f"pca_{self.train_dataset_id}_k{self.k}"

    @property
    def row_mask(self) -> np.ndarray:
        return self.train_row_mask

    @property
    def columns(self) -> np.ndarray:
        return self.basis

    def truncate(self, k: int) -> PcaModel:
        """Leading ``k`` components; nested in every larger truncation."""
        if not 1 <= k <= self.k:
            raise ValueError(f"k={k} outside 1..{self.k}")
        return PcaModel(
            self.basis[:, :k].copy(),
            self.singular_values[:k].copy(),
            self.train_row_mask,
            self.train_dataset_id,
            self.total_energy,
            self.all_singular_values,
        )

    def spectrum_ve(self) -> np.ndarray:
        """Train VE for k = 1..len(spectrum), from the singular values alone."""
        s = self.all_singular_values if self.all_singular_values is not None else self.singular_values
        return 100.0 * np.cumsum(s**2) / self.total_energy

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        """``<path>`` holds U; ``<path>.sigma.csv`` the singular values; ``<path>.json`` metadata."""
        path = Path(path)
        write_matrix_csv(self.basis, path)
        spectrum = self.all_singular_values if self.all_singular_values is not None else self.singular_values
        write_matrix_csv(spectrum.reshape(-1, 1), path.with_name(path.name + ".sigma.csv"))
        doc = {
            "type": "pca_model",
            "k": self.k,
            "train_dataset_id": self.train_dataset_id,
            "train_row_mask": [bool(b) for b in self.train_row_mask],
            "total_energy": self.total_energy,
            "centered": False,
            "sign_convention": SIGN_CONVENTION,
            **(extra or {}),
        }
        write_json(doc, sidecar_path(path))

    @classmethod
    def load(cls, path: str | Path) -> PcaModel:
        path = Path(path)
        doc = read_json(sidecar_path(path))
        spectrum = read_matrix_csv(path.with_name(path.name + ".sigma.csv")).ravel()
        basis = read_matrix_csv(path)
        k = int(doc["k"])
        return cls(
            basis,
            spectrum[:k].copy(),
            np.array(doc["train_row_mask"], dtype=bool),
            doc.get("train_dataset_id", ""),
            float(doc["total_energy"]),
            spectrum,
        )


@dataclass(frozen=True)
class Projection:
    weights: np.ndarray  # V', (k, n)
    reconstruction: np.ndarray  # Y_hat, (136, n)
    common_row_mask: np.ndarray
    original: np.ndarray  # Y restricted to the common rows

    def test_ve(self) -> VeReport:
        return variance_explained(self.original, self.reconstruction, self.common_row_mask)


def _fix_signs(U: np.ndarray) -> np.ndarray:
    # argmax returns the first (lowest-row) maximiser
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def fit_pca(X: FeatureMatrix, k: int | None = None) -> PcaModel:
    """Top-``k`` left singular vectors of the uncentred feature matrix.

    The SVD runs on the rows present in ``X.row_mask`` only, so basis rows for
    absent keypoints are exactly zero.  ``k=None`` keeps every component.
    """
    data = X.data
    rows = np.flatnonzero(X.row_mask)
    kmax = min(len(rows), data.shape[1])
    if k is None:
        k = kmax
    if not 1 <= k <= kmax:
        raise ValueError(f"k={k} outside 1..{kmax} (present rows {len(rows)}, columns {data.shape[1]})")
    sub = data[rows]
    energy = float(np.sum(sub * sub))
    if energy == 0.0:
        raise DegenerateDataError("training data is all zero")
    u, s, _ = np.linalg.svd(sub, full_matrices=False)
    u = _fix_signs(u)
    U = np.zeros((N_FEATURES, k))
    U[rows] = u[:, :k]
    return PcaModel(U, s[:k].copy(), X.row_mask.copy(), X.dataset_id, energy, s.copy())


def select_k(model: PcaModel, target_ve: float) -> int:
    """Smallest k whose Train VE reaches ``target_ve`` percent."""
    ve = model.spectrum_ve()
    hits = np.flatnonzero(ve >= target_ve - TARGET_VE_SLACK)
    if len(hits) == 0:
        raise ValueError(f"target VE {target_ve} unreachable; maximum achievable is {ve[-1]:.6f}")
    return int(hits[0]) + 1


def masked_columns(U: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the rows of ``U`` outside ``mask``.

    The result is generally no longer orthonormal; projection still uses its
    plain transpose.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (U.shape[0],):
        raise ValueError(f"mask must have {U.shape[0]} entries")
    return np.where(mask[:, None], U, 0.0)


def project(model: PcaModel, Y: FeatureMatrix) -> Projection:
    """``V' = U_c.T @ Y_c`` and ``Y_hat = U_c @ V'`` on the common present rows."""
    common = model.train_row_mask & Y.row_mask
    if not common.any():
        raise ValueError("train and test layouts share no keypoints")
    Uc = masked_columns(model.basis, common)
    Yc = masked_columns(Y.data, common)
    V = Uc.T @ Yc
    return Projection(V, Uc @ V, common, Yc)


def train_ve(model: PcaModel, X: FeatureMatrix) -> VeReport:
    """Train VE via explicit reconstruction (not the spectrum shortcut)."""
    return project(model, X).test_ve()
