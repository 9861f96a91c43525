"""Variance-explained and mean-components metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class VeReport:
    value: float  # percent, not clamped
    numerator: float  # squared Frobenius norm of the residual
    denominator: float  # squared Frobenius norm of the original
    rows_used: int

    def to_json(self) -> dict:
        return asdict(self)


def variance_explained(original, reconstruction, row_mask=None) -> VeReport:
    """``100 * (1 - ||orig - recon||_F^2 / ||orig||_F^2)`` over the rows in ``row_mask``."""
    original = np.asarray(original, dtype=float)
    reconstruction = np.asarray(reconstruction, dtype=float)
    if original.shape != reconstruction.shape:
        raise ValueError(f"shape mismatch {original.shape} vs {reconstruction.shape}")
    if row_mask is None:
        row_mask = np.ones(original.shape[0], dtype=bool)
    row_mask = np.asarray(row_mask, dtype=bool)
    o = original[row_mask]
    r = reconstruction[row_mask]
    den = float(np.sum(o * o))
    if den <= 0:
        raise ValueError("zero denominator: original is all zero on the masked rows")
    diff = o - r
    num = float(np.sum(diff * diff))
    return VeReport(100.0 * (1.0 - num / den), num, den, int(row_mask.sum()))


def mean_components(weights) -> float:
    """Average count of stored nonzeros per column."""
    weights = np.asarray(weights)
    if weights.ndim != 2 or weights.shape[1] == 0:
        raise ValueError("mean_components needs a non-empty 2-D weight matrix")
    return float(np.count_nonzero(weights, axis=0).mean())
