"""Dense symmetric linear algebra: svec coordinates, eigendecomposition,
PSD projection, elementary symmetric basis matrices, and majorization.

Conventions used throughout the package:
  * svec uses upper-triangle row-major order (0,0),(0,1),...,(0,n-1),(1,1),...
    with off-diagonal entries scaled by sqrt(2), so that
    dot(svec(M1), svec(M2)) == trace(M1 @ M2).
  * all indices are 0-based.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

SQRT2 = math.sqrt(2.0)


class EighError(RuntimeError):
    """Symmetric eigendecomposition failed to converge."""


def svec_len(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def _triu(n: int):
    """Cached (rows, cols, weights) for the svec coordinate order."""
    rows, cols = np.triu_indices(n)
    w = np.where(rows == cols, 1.0, SQRT2)
    return rows, cols, w


@lru_cache(maxsize=None)
def svec_index_map(n: int) -> np.ndarray:
    """n x n array mapping matrix position (s, t) to its svec coordinate."""
    rows, cols, _ = _triu(n)
    idx = np.empty((n, n), dtype=np.int64)
    for k in range(len(rows)):
        idx[rows[k], cols[k]] = k
        idx[cols[k], rows[k]] = k
    return idx


def svec_index(s: int, t: int, n: int) -> int:
    """svec coordinate of matrix position (s, t), 0-based."""
    if not (0 <= s < n and 0 <= t < n):
        raise IndexError(f"position ({s}, {t}) out of range for n={n}")
    return int(svec_index_map(n)[s, t])


def check_symmetric(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.array_equal(M, M.T):
        raise ValueError(f"{name} is not exactly symmetric")
    return M


def sym(M: np.ndarray) -> np.ndarray:
    """Symmetrize: (M + M.T) / 2."""
    M = np.asarray(M, dtype=float)
    return (M + M.T) / 2.0


def svec(M: np.ndarray) -> np.ndarray:
    """Isometric vectorization of a symmetric matrix (length n(n+1)/2)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    rows, cols, w = _triu(n)
    return M[rows, cols] * w


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of svec; infers n from the vector length."""
    v = np.asarray(v, dtype=float)
    d = v.size
    n = int(round((math.sqrt(8 * d + 1) - 1) / 2))
    if svec_len(n) != d:
        raise ValueError(f"vector length {d} is not a triangular number")
    rows, cols, w = _triu(n)
    M = np.zeros((n, n))
    M[rows, cols] = v / w
    M[cols, rows] = M[rows, cols]
    return M


def basis_f(s: int, t: int, n: int) -> np.ndarray:
    """Elementary symmetric basis matrix: e_s e_s^T on the diagonal,
    (e_s e_t^T + e_t e_s^T)/2 off it. trace(basis_f(s,t) @ X) == X[s,t]."""
    if not (0 <= s < n and 0 <= t < n):
        raise IndexError(f"indices ({s}, {t}) out of range for n={n}")
    F = np.zeros((n, n))
    if s == t:
        F[s, s] = 1.0
    else:
        F[s, t] = 0.5
        F[t, s] = 0.5
    return F


def eigh(M: np.ndarray, method: str = "lapack", max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix.

    Returns (w, Q) with eigenvalues ascending and M == Q @ diag(w) @ Q.T.
    method="lapack" uses the LAPACK driver; method="jacobi" runs cyclic
    Jacobi sweeps (capped at max_sweeps) and is kept as an independent
    cross-check path.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected square matrix, got shape {M.shape}")
    if method == "lapack":
        try:
            w, Q = np.linalg.eigh(M)
        except np.linalg.LinAlgError as exc:
            raise EighError(f"eigendecomposition did not converge: {exc}") from exc
        return w, Q
    if method == "jacobi":
        return jacobi_eigh(M, max_sweeps=max_sweeps)
    raise ValueError(f"unknown eigh method {method!r}")


def jacobi_eigh(M: np.ndarray, max_sweeps: int = 100, tol: float = 1e-14):
    """Cyclic Jacobi eigendecomposition for dense symmetric matrices.

    Sweeps over all (p, q) pairs, zeroing each off-diagonal entry with a
    Givens rotation, until the off-diagonal Frobenius mass drops below
    tol * ||M||_F. Raises EighError after max_sweeps non-converged sweeps.
    """
    A = np.array(M, dtype=float)
    A = (A + A.T) / 2.0
    n = A.shape[0]
    Q = np.eye(n)
    if n == 1:
        return A[0, :1].copy(), Q
    norm = np.linalg.norm(A)
    if norm == 0.0:
        return np.zeros(n), Q
    thresh = tol * norm
    iu = np.triu_indices(n, k=1)
    for _ in range(max_sweeps):
        # off-diagonal mass computed entrywise: differencing the full and
        # diagonal Frobenius masses cancels catastrophically near convergence
        off = math.sqrt(2.0 * float(np.sum(A[iu] ** 2)))
        if off <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                app, aqq = A[p, p], A[q, q]
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                new_p = col_p * c - col_q * s
                new_q = col_q * c + col_p * s
                A[:, p] = new_p
                A[p, :] = new_p
                A[:, q] = new_q
                A[q, :] = new_q
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                qp = Q[:, p] * c - Q[:, q] * s
                qq = Q[:, q] * c + Q[:, p] * s
                Q[:, p] = qp
                Q[:, q] = qq
    else:
        raise EighError(
            f"jacobi sweeps did not converge in {max_sweeps} sweeps "
            f"(off-diagonal norm {off:.3e}, threshold {thresh:.3e})"
        )
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], Q[:, order]


def project_psd(M: np.ndarray) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (eigenvalue clamp)."""
    w, Q = eigh(M)
    if w.size and w[0] >= 0.0:
        return np.asarray(M, dtype=float)
    wp = np.maximum(w, 0.0)
    P = (Q * wp) @ Q.T
    return (P + P.T) / 2.0


def majorizes(a, b, tol: float = 1e-9) -> bool:
    """True iff the sorted-descending vector a majorizes b: every prefix sum
    of b is <= the matching prefix sum of a plus tol, and the totals agree
    within tol."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    if abs(ca[-1] - cb[-1]) > tol:
        return False
    return bool(np.all(cb[:-1] <= ca[:-1] + tol))
