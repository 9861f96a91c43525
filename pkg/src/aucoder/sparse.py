"""Least-angle regression with the lasso modification, early-stopped on the
number of active atoms.

The path is traced for::

    min_v  0.5 * ||y - D v||^2 + 0.5 * ridge * ||v||^2 + lam * ||v||_1

from ``lam = max|D^T y|`` down towards zero.  With ``ridge > 0`` this is the
elastic-net augmentation ``[D; sqrt(ridge) I]``, ``[y; 0]`` worked in Gram
form, and returned coefficients are rescaled by ``1 + ridge``.  An atom
leaves the active set when its coefficient crosses zero.

Encoding stops at the knot where a further atom would join an active set
that already holds ``max_active`` atoms, or where all correlations vanish.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .features import FeatureMatrix
from .metrics import VeReport, mean_components, variance_explained
from .pca import masked_columns

log = logging.getLogger(__name__)

JOIN, DROP, END = "join", "drop", "end"


@dataclass(frozen=True)
class LarsConfig:
    max_active: int
    ridge_penalty: float = 0.0
    tolerance: float = 1e-12  # relative to the initial max correlation
    normalize_columns: bool = False

    def __post_init__(self):
        if self.max_active < 1:
            raise ValueError("max_active must be at least 1")
        if self.ridge_penalty < 0:
            raise ValueError("ridge_penalty must be non-negative")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class Knot:
    lam: float  # max absolute correlation at this point of the path
    coef: np.ndarray
    active: tuple[int, ...]
    event: str  # what happened on arriving here
    atom: int | None = None


@dataclass
class LarsPath:
    knots: list[Knot] = field(default_factory=list)
    reason: str = ""

    def point_for_budget(self, budget: int) -> Knot:
        """Knot where a path capped at ``budget`` active atoms stops.

        That is the first join that would exceed the cap; the joining atom's
        coefficient is still zero there.
        """
        for knot in self.knots:
            if knot.event == JOIN and len(knot.active) > budget:
                return knot
        return self.knots[-1]


def _solve_spd(G: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return None
    diag = np.diag(L)
    if diag.min() ** 2 <= 1e-12 * np.abs(np.diag(G)).max():
        return None
    z = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, z)


def lars_path(
    gram: np.ndarray,
    corr0: np.ndarray,
    max_active: int,
    tolerance: float = 1e-12,
    exclude: np.ndarray | None = None,
    max_steps: int | None = None,
    signal_norm: float | None = None,
) -> LarsPath:
    """Trace the lasso path from Gram matrix ``D^T D (+ ridge I)`` and ``D^T y``.

    Stops at the first join that would exceed ``max_active``.  ``exclude``
    flags atoms that may never enter (e.g. columns that vanish under a mask).
    With ``signal_norm`` given, correlations below ``tolerance`` times their
    Cauchy-Schwarz bound count as zero, so a signal orthogonal to the
    dictionary up to rounding gets an empty code.
    """
    c = len(corr0)
    if max_steps is None:
        max_steps = 8 * c + 16
    eligible = np.ones(c, dtype=bool) if exclude is None else ~np.asarray(exclude, dtype=bool)
    beta = np.zeros(c)
    C0 = float(np.max(np.abs(np.where(eligible, corr0, 0.0)))) if c else 0.0
    path = LarsPath([Knot(C0, beta.copy(), (), "start")])
    floor = 0.0
    if signal_norm is not None and c:
        floor = tolerance * signal_norm * float(np.sqrt(np.max(np.diag(gram))))
    if C0 <= floor:
        path.reason = "zero correlation"
        return path
    eps = tolerance * C0

    active: list[int] = []
    just_dropped: int | None = None
    for _ in range(max_steps):
        corr = corr0 - gram @ beta
        if not active:
            j = int(np.argmax(np.abs(np.where(eligible, corr, 0.0))))
            active.append(j)
            path.knots.append(Knot(float(abs(corr[j])), beta.copy(), tuple(active), JOIN, j))
            continue
        A = np.array(active)
        C = float(np.max(np.abs(corr[A])))
        if C <= eps:
            path.reason = "converged"
            return path
        s = np.sign(corr[A])
        d = _solve_spd(gram[np.ix_(A, A)], s)
        if d is None:
            path.reason = "singular active set"
            return path
        a = gram[:, A] @ d

        # next join: |corr_j - g a_j| == C - g for an inactive atom
        inactive = eligible.copy()
        inactive[A] = False
        g_join, j_join = np.inf, None
        if inactive.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                g1 = (C - corr) / (1.0 - a)
                g2 = (C + corr) / (1.0 + a)
            g1 = np.where(inactive & np.isfinite(g1) & (g1 > eps), g1, np.inf)
            g2 = np.where(inactive & np.isfinite(g2) & (g2 > eps), g2, np.inf)
            if just_dropped is not None:
                # the dropped atom sits on the boundary; only its other root may re-admit it
                if corr[just_dropped] > 0:
                    g1[just_dropped] = np.inf
                else:
                    g2[just_dropped] = np.inf
            g = np.minimum(g1, g2)
            gmin = float(g.min())
            if np.isfinite(gmin) and gmin < C - eps:
                # ties resolve to the lowest column index
                j_join = int(np.flatnonzero(g <= gmin * (1 + 1e-12))[0])
                g_join = gmin

        # next drop: an active coefficient reaches zero
        g_drop, i_drop = np.inf, None
        b = beta[A]
        crossing = b * d < 0
        if crossing.any():
            gd = np.where(crossing, -b / np.where(crossing, d, 1.0), np.inf)
            pos = int(np.argmin(gd))
            g_drop, i_drop = float(gd[pos]), int(A[pos])

        if g_drop < min(g_join, C):
            beta[A] += g_drop * d
            beta[i_drop] = 0.0
            active.remove(i_drop)
            just_dropped = i_drop
            path.knots.append(Knot(C - g_drop, beta.copy(), tuple(active), DROP, i_drop))
            continue
        if g_join == np.inf:
            # all correlations reach zero together: least-squares end of the path
            beta[A] += C * d
            path.knots.append(Knot(0.0, beta.copy(), tuple(active), END))
            path.reason = "converged"
            return path
        beta[A] += g_join * d
        active.append(j_join)
        just_dropped = None
        path.knots.append(Knot(C - g_join, beta.copy(), tuple(active), JOIN, j_join))
        if len(active) > max_active:
            beta[j_join] = 0.0
            path.reason = "budget"
            return path
    path.reason = "max steps"
    log.warning("LARS path hit the step limit (%d)", max_steps)
    return path


def _prepare(dictionary: np.ndarray, config: LarsConfig):
    norms = np.sqrt(np.sum(dictionary**2, axis=0))
    zero = norms == 0
    D = dictionary
    if config.normalize_columns:
        D = dictionary / np.where(zero, 1.0, norms)
    gram = D.T @ D
    if config.ridge_penalty > 0:
        gram = gram + config.ridge_penalty * np.eye(gram.shape[0])
    return D, gram, norms, zero


def _finish(coef: np.ndarray, norms: np.ndarray, zero: np.ndarray, config: LarsConfig) -> np.ndarray:
    out = coef.copy()
    if config.ridge_penalty > 0:
        out *= 1.0 + config.ridge_penalty
    if config.normalize_columns:
        out[~zero] /= norms[~zero]
    return out


def lars_encode(y: np.ndarray, dictionary: np.ndarray, config: LarsConfig) -> np.ndarray:
    """Sparse code of one signal on ``dictionary`` (p x c), at most ``max_active`` nonzeros."""
    y = np.asarray(y, dtype=float).ravel()
    dictionary = np.asarray(dictionary, dtype=float)
    if dictionary.ndim != 2 or dictionary.shape[0] != y.shape[0]:
        raise ValueError("dictionary rows must match the signal length")
    if not np.all(np.isfinite(y)):
        raise ValueError("signal has non-finite entries")
    D, gram, norms, zero = _prepare(dictionary, config)
    if zero.any():
        raise ValueError(f"dictionary column {int(np.flatnonzero(zero)[0])} is zero")
    path = lars_path(gram, D.T @ y, config.max_active, config.tolerance, signal_norm=float(np.linalg.norm(y)))
    return _finish(path.knots[-1].coef, norms, zero, config)


@dataclass(frozen=True)
class SparseCode:
    weights: np.ndarray  # (c, n)
    active_counts: np.ndarray  # (n,)
    dictionary_id: str
    max_active: int
    ridge_penalty: float
    common_row_mask: np.ndarray
    reconstruction: np.ndarray  # (136, n), zero outside the common rows
    original: np.ndarray  # test data restricted to the common rows
    normalize_columns: bool = False

    @property
    def mc(self) -> float:
        return mean_components(self.weights)

    def test_ve(self) -> VeReport:
        return variance_explained(self.original, self.reconstruction, self.common_row_mask)

    def sidecar(self) -> dict:
        return {
            "type": "sparse_code",
            "dictionary_id": self.dictionary_id,
            "budget": self.max_active,
            "realized_mc": self.mc,
            "ridge_penalty": self.ridge_penalty,
            "normalize_columns": self.normalize_columns,
            "test_ve": self.test_ve().value,
            "common_row_mask": [bool(b) for b in self.common_row_mask],
        }


def _dictionary_parts(dictionary):
    cols = np.asarray(dictionary.columns, dtype=float)
    return cols, np.asarray(dictionary.row_mask, dtype=bool), getattr(dictionary, "dictionary_id", "dictionary")


def _encode_paths(Y: FeatureMatrix, dictionary, max_active: int, config: LarsConfig):
    cols, dmask, did = _dictionary_parts(dictionary)
    common = dmask & Y.row_mask
    if not common.any():
        raise ValueError("dictionary and test layouts share no keypoints")
    Dm = masked_columns(cols, common)
    Ym = masked_columns(Y.data, common)
    D, gram, norms, zero = _prepare(Dm, config)
    if zero.all():
        raise ValueError("every dictionary column vanishes on the common keypoints")
    corr = D.T @ Ym
    ynorm = np.linalg.norm(Ym, axis=0)
    paths = [
        lars_path(gram, corr[:, j], max_active, config.tolerance, exclude=zero, signal_norm=float(ynorm[j]))
        for j in range(Ym.shape[1])
    ]
    return paths, Dm, Ym, common, norms, zero, did


def _code_from_knots(knots, Dm, Ym, common, norms, zero, did, budget, config) -> SparseCode:
    W = np.column_stack([_finish(k.coef, norms, zero, config) for k in knots])
    return SparseCode(
        W,
        np.count_nonzero(W, axis=0),
        did,
        budget,
        config.ridge_penalty,
        common,
        Dm @ W,
        Ym,
        config.normalize_columns,
    )


def encode_matrix(Y: FeatureMatrix, dictionary, config: LarsConfig) -> SparseCode:
    """Encode every column of ``Y`` with a per-sample cap of ``config.max_active`` atoms.

    ``dictionary`` is anything with ``columns`` and ``row_mask`` (an
    :class:`AuDictionary` or a :class:`PcaModel`).  Rows outside the keypoints
    common to both are dropped; columns that vanish there never activate.
    """
    paths, Dm, Ym, common, norms, zero, did = _encode_paths(Y, dictionary, config.max_active, config)
    return _code_from_knots([p.knots[-1] for p in paths], Dm, Ym, common, norms, zero, did, config.max_active, config)


@dataclass(frozen=True)
class BudgetRow:
    budget: int
    realized_mc: float
    test_ve: float


def sweep_budget(
    Y: FeatureMatrix,
    dictionary,
    budgets: Sequence[int],
    ridge_penalty: float = 0.0,
    normalize_columns: bool = False,
    tolerance: float = 1e-12,
) -> list[BudgetRow]:
    """Test VE and realised MC for each per-sample budget.

    Each sample's path is traced once up to the largest budget; smaller
    budgets read off the knot where that cap would have stopped it, which is
    exactly where a separately capped run ends.
    """
    budgets = list(budgets)
    if not budgets:
        raise ValueError("no budgets given")
    if budgets != sorted(budgets):
        raise ValueError("budgets must be sorted ascending")
    config = LarsConfig(max(budgets), ridge_penalty, tolerance, normalize_columns)
    paths, Dm, Ym, common, norms, zero, did = _encode_paths(Y, dictionary, config.max_active, config)
    rows = []
    for b in budgets:
        LarsConfig(b)  # validates b >= 1
        code = _code_from_knots(
            [p.point_for_budget(b) for p in paths], Dm, Ym, common, norms, zero, did, b, config
        )
        rows.append(BudgetRow(b, code.mc, code.test_ve().value))
    return rows
