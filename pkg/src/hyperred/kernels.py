"""Dense linear-algebra and constrained least-squares primitives."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTruncation, DimensionMismatch, RankDeficient

__all__ = [
    "TruncatedSvd",
    "truncated_svd",
    "tail_energy",
    "qr_dense",
    "nnls_fixed_support",
    "nnls",
]


def tail_energy(singular_values, k):
    """Return ``sqrt(sum_{i>k} sigma_i**2)`` for a descending list."""
    s = np.asarray(singular_values, dtype=float)
    tail = s[k:]
    # summing from the smallest value keeps tiny tails accurate
    return float(np.sqrt(np.sum(tail[::-1] ** 2)))


@dataclass(frozen=True)
class TruncatedSvd:
    """Leading ``k`` singular triplets plus the full singular value list.

    Attributes
    ----------
    left : (m, k) ndarray
        Leading left singular vectors, orthonormal columns.
    singular_values : (min(m, n),) ndarray
        All singular values, non-increasing.
    right : (k, n) ndarray
        Leading right singular vectors, orthonormal rows.
    k : int
        Truncation rank.
    degenerate : bool
        True when ``sigma_k`` and ``sigma_{k+1}`` tie, i.e. the truncation is
        not unique.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    k: int
    degenerate: bool = False

    @property
    def tail(self):
        return tail_energy(self.singular_values, self.k)

    def reconstruct(self):
        return (self.left * self.singular_values[: self.k]) @ self.right


def _check_finite(A, name="A"):
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf entries")


def _fix_svd_signs(U, Vt):
    # first entry with magnitude above round-off decides the sign of each pair
    U = U.copy()
    Vt = Vt.copy()
    for j in range(U.shape[1]):
        col = U[:, j]
        scale = np.max(np.abs(col)) if col.size else 0.0
        nz = np.flatnonzero(np.abs(col) > 1e-12 * scale)
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            Vt[j, :] = -Vt[j, :]
    return U, Vt


def truncated_svd(A, k):
    """Best rank-``k`` approximation of ``A`` in the Frobenius norm.

    Parameters
    ----------
    A : (m, n) array_like
        Finite real matrix.
    k : int or callable
        Truncation rank, ``1 <= k <= min(m, n)``, or a function mapping the
        singular values to the rank (so that the factorization runs once).

    Returns
    -------
    TruncatedSvd
        Leading factors and the complete singular value list, so that the
        truncation error ``sqrt(sum_{i>k} sigma_i^2)`` is exact.

    Warns
    -----
    DegenerateTruncation
        If ``sigma_k`` and ``sigma_{k+1}`` agree to a relative ``1e-12`` while
        being nonzero. The computation proceeds with LAPACK's ordering.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch("A must be two-dimensional")
    m, n = A.shape
    if not callable(k) and not 1 <= k <= min(m, n):
        raise DimensionMismatch(f"k={k} outside [1, {min(m, n)}]")
    _check_finite(A)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if callable(k):
        k = int(k(s))
        if not 1 <= k <= min(m, n):
            raise DimensionMismatch(f"rank rule returned k={k} outside [1, {min(m, n)}]")
    U, Vt = _fix_svd_signs(U[:, :k], Vt[:k, :])

    degenerate = False
    if k < s.size and s[0] > 0:
        gap = s[k - 1] - s[k]
        if s[k - 1] > 1e-12 * s[0] and gap <= 1e-12 * s[k - 1]:
            degenerate = True
            warnings.warn(
                f"sigma_{k} = sigma_{k + 1} = {s[k - 1]:.6e}; truncation is not unique",
                DegenerateTruncation,
                stacklevel=2,
            )
    return TruncatedSvd(U, s, Vt, k, degenerate)


def qr_dense(A):
    """Thin QR factorization with a positive diagonal in ``R``.

    Raises
    ------
    RankDeficient
        If a diagonal entry of ``R`` falls below ``1e-12 * ||A||_F``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise DimensionMismatch("qr_dense expects a tall or square 2-D matrix")
    _check_finite(A)
    Q, R = np.linalg.qr(A, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q = Q * signs
    R = R * signs[:, None]
    normA = np.linalg.norm(A)
    small = np.flatnonzero(np.diag(R) <= 1e-12 * normA)
    if normA == 0 or small.size:
        col = int(small[0]) if small.size else 0
        raise RankDeficient(f"column {col} is (numerically) dependent")
    return Q, R


def nnls(E, f, maxiter=None):
    """Lawson-Hanson active-set solver for ``min ||E x - f||, x >= 0``.

    Returns the solution only; dual feasibility holds up to a tolerance of
    order ``eps * ||E|| * ||f||``.
    """
    E = np.asarray(E, dtype=float)
    f = np.asarray(f, dtype=float)
    m, n = E.shape
    x = np.zeros(n)
    if n == 0:
        return x
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        return x
    if maxiter is None:
        maxiter = 3 * n + 10
    tol = 10 * np.finfo(float).eps * max(m, n) * np.linalg.norm(E) * fnorm

    passive = np.zeros(n, dtype=bool)
    # columns whose entry would immediately leave again; cleared once x moves
    blocked = np.zeros(n, dtype=bool)
    dual = E.T @ (f - E @ x)
    for _ in range(maxiter):
        candidates = np.where(passive | blocked, -np.inf, dual)
        t = int(np.argmax(candidates))
        if candidates[t] <= tol:
            break
        passive[t] = True
        entering = True
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            z[idx] = np.linalg.lstsq(E[:, idx], f, rcond=None)[0]
            if np.all(z[idx] > 0):
                x = z
                blocked[:] = False
                break
            if entering and z[t] <= 0:
                passive[t] = False
                blocked[t] = True
                break
            entering = False
            neg = idx[z[idx] <= 0]
            ratios = x[neg] / (x[neg] - z[neg])
            j = int(np.argmin(ratios))
            x = x + ratios[j] * (z - x)
            x[neg[j]] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
            blocked[:] = False
            if not passive.any():
                break
        dual = E.T @ (f - E @ x)
    return x


def nnls_fixed_support(A, g, support):
    """Non-negative least squares restricted to a column subset.

    Solves ``min ||A w - g||`` subject to ``w_i >= 0`` for ``i`` in
    ``support`` and ``w_j = 0`` otherwise.

    The support columns are reduced by a thin QR first, so the active-set
    iterations only touch a ``|support| x |support|`` triangular system; the
    residual is evaluated against the original ``A``.

    Parameters
    ----------
    A : (m, M) array_like
    g : (m,) array_like
    support : sequence of int
        Column indices allowed to be nonzero.

    Returns
    -------
    w : (M,) ndarray
    residual : float
        ``||A w - g||``.
    """
    A = np.asarray(A, dtype=float)
    g = np.asarray(g, dtype=float)
    if A.ndim != 2 or g.shape != (A.shape[0],):
        raise DimensionMismatch("A and g have incompatible shapes")
    M = A.shape[1]
    support = np.asarray(list(support), dtype=int).reshape(-1)
    w = np.zeros(M)
    if support.size == 0:
        return w, float(np.linalg.norm(g))
    if np.any(support < 0) or np.any(support >= M):
        raise DimensionMismatch("support index out of range")
    if np.unique(support).size != support.size:
        raise DimensionMismatch("support contains duplicates")

    B = A[:, support]
    if B.shape[0] > B.shape[1]:
        Q, R = np.linalg.qr(B, mode="reduced")
        ws = nnls(R, Q.T @ g)
    else:
        ws = nnls(B, g)
    w[support] = ws
    residual = float(np.linalg.norm(B @ ws - g))
    return w, residual
