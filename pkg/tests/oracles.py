"""Independent reference computations used only by the tests."""

from itertools import combinations, product

import numpy as np


def cd_lasso(D, y, lam, ridge=0.0, tol=1e-15, max_sweeps=200000):
    """Cyclic coordinate descent for 0.5||y - Dv||^2 + 0.5 ridge ||v||^2 + lam ||v||_1."""
    c = D.shape[1]
    v = np.zeros(c)
    r = y.astype(float).copy()
    sq = np.sum(D * D, axis=0) + ridge
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(c):
            old = v[j]
            rho = D[:, j] @ r + (sq[j] - ridge) * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / sq[j]
            if new != old:
                r -= D[:, j] * (new - old)
                v[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return v


def enumerate_lasso(D, y, lam, max_support):
    """Lasso solution at ``lam`` by trying every support/sign pattern up to ``max_support``.

    On a support S with signs s the stationarity condition gives
    v_S = (D_S^T D_S)^{-1} (D_S^T y - lam s); the candidate is accepted when
    its signs agree with s and every inactive correlation is at most lam.
    """
    c = D.shape[1]
    best = None
    for size in range(0, max_support + 1):
        for S in combinations(range(c), size):
            for signs in product((-1.0, 1.0), repeat=size):
                v = np.zeros(c)
                if size:
                    DS = D[:, S]
                    vs = np.linalg.solve(DS.T @ DS, DS.T @ y - lam * np.array(signs))
                    if np.any(np.sign(vs) != np.array(signs)):
                        continue
                    v[list(S)] = vs
                corr = D.T @ (y - D @ v)
                inactive = [j for j in range(c) if j not in S]
                if inactive and np.max(np.abs(corr[inactive])) > lam * (1 + 1e-9) + 1e-12:
                    continue
                obj = 0.5 * np.sum((y - D @ v) ** 2) + lam * np.sum(np.abs(v))
                if best is None or obj < best[0] - 1e-12:
                    best = (obj, v, S)
    return best


def affine_normal_equations(src, dst):
    """Affine LS via the explicit 6x6 normal equations, unknowns (a11, a12, a21, a22, t1, t2)."""
    rows, rhs = [], []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 0, 0, 1, 0])
        rhs.append(u)
        rows.append([0, 0, x, y, 0, 1])
        rhs.append(v)
    M = np.array(rows, dtype=float)
    b = np.array(rhs, dtype=float)
    p = np.linalg.inv(M.T @ M) @ (M.T @ b)
    return np.array([[p[0], p[1]], [p[2], p[3]]]), p[4:]


def pcg64_doubles(seed, n):
    """Uniform doubles from raw PCG64 output using the 53-bit conversion ``(raw >> 11) * 2**-53``."""
    raw = np.random.PCG64(seed).random_raw(n)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def reference_subsample(m, count, seed):
    u = pcg64_doubles(seed, m)
    order = sorted(range(m), key=lambda i: (u[i], i))
    return sorted(order[:count])
