"""Structured compression of the training data along the snapshot axis.

With ``N = Q R`` the constrained best rank-``K_thin`` approximation of
``C = N @ G_hat`` reduces to a plain truncated SVD of the small matrix
``R @ G_hat`` (``M_J x K``). Neither the dense manifold matrix nor ``C`` is
formed: ``R`` is diagonal or block diagonal and is applied blockwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, RankDeficient, RankDeficientGroup, WrongCaseKind
from .kernels import qr_dense, tail_energy, truncated_svd
from .manifold import CaseKind, StructuredN, TrainingDataset, reorder_C_to_A, sum_groups

__all__ = [
    "StructuredQr",
    "CompressedDataset",
    "structured_qr",
    "compress",
    "compressed_singular_values",
    "choose_rank",
    "simplified_bound_factor",
]


@dataclass(frozen=True, eq=False)
class StructuredQr:
    """QR factor of ``N`` stored by structure.

    Only columns flagged active (not identically zero) take part; ``columns``
    lists them. For the diagonal cases ``diag`` holds the column norms of
    ``N``; for the general cell case ``blocks`` holds one upper-triangular
    ``R^m`` and one orthonormal ``Q^m`` (``N_r x |J^m|``) per group together
    with the column indices of that group.
    """

    kind: CaseKind
    columns: np.ndarray
    diag: np.ndarray | None = None
    blocks: tuple = ()

    @property
    def size(self):
        return self.columns.size

    def apply_R(self, X):
        """``R @ X`` for ``X`` indexed by the active columns."""
        if self.diag is not None:
            return self.diag[:, None] * X
        out = np.empty_like(X)
        pos = 0
        for cols, R, _ in self.blocks:
            s = slice(pos, pos + cols.size)
            out[s] = R @ X[s]
            pos += cols.size
        return out

    def apply_R_inv(self, X):
        if self.diag is not None:
            return X / self.diag[:, None]
        out = np.empty_like(X)
        pos = 0
        for cols, R, _ in self.blocks:
            s = slice(pos, pos + cols.size)
            out[s] = solve_triangular(R, X[s], lower=False)
            pos += cols.size
        return out

    def dense_R(self):
        if self.diag is not None:
            return np.diag(self.diag)
        R = np.zeros((self.size, self.size))
        pos = 0
        for cols, Rm, _ in self.blocks:
            R[pos : pos + cols.size, pos : pos + cols.size] = Rm
            pos += cols.size
        return R

    def dense_Q(self, n_struct):
        """Explicit ``Q`` with ``N[:, columns] = Q R``; oracle use only."""
        if self.diag is not None:
            return n_struct.dense()[:, self.columns] / self.diag
        Q = np.zeros((n_struct.n_rows, self.size))
        group_of = n_struct.group_of_column
        rows = np.arange(n_struct.N_r) * n_struct.M
        pos = 0
        for cols, _, Qm in self.blocks:
            Q[rows + group_of[cols[0]], pos : pos + cols.size] = Qm
            pos += cols.size
        return Q


def structured_qr(n: StructuredN):
    """QR factorization of ``N`` exploiting its sparsity.

    Quadrature and simplified cells: the columns of ``N`` are mutually
    orthogonal, so ``R = diag(||N[:, j]||)`` with ``||N[:, j]||^2 = sum_n
    (p^n_j)^2``. General cells: the columns of different groups have disjoint
    row support, so ``R`` is block diagonal with the QR factors of the
    ``N_r x |J^m|`` slices ``P^m = [p_hat^n_j]``.

    Zero columns of ``N`` are left out (see ``StructuredN.column_active``).

    Raises
    ------
    RankDeficientGroup
        When a group slice has numerically dependent columns.
    """
    active = n.column_active
    columns = np.flatnonzero(active)
    if n.diagonal:
        diag = np.sqrt(np.sum(n.P[:, columns] ** 2, axis=0))
        return StructuredQr(n.kind, columns, diag=diag)

    blocks = []
    for m in range(n.M):
        lo, hi = n.offsets[m], n.offsets[m + 1]
        cols = lo + np.flatnonzero(active[lo:hi])
        if cols.size == 0:
            continue
        Pm = n.P[:, cols]
        if Pm.shape[0] < Pm.shape[1]:
            raise RankDeficientGroup(m, f"group {m}: {cols.size} columns but N_r={n.N_r}")
        try:
            Qm, Rm = qr_dense(Pm)
        except RankDeficient:
            raise RankDeficientGroup(m) from None
        blocks.append((cols, Rm, Qm))
    columns = np.concatenate([b[0] for b in blocks]) if blocks else np.zeros(0, int)
    return StructuredQr(n.kind, columns, blocks=tuple(blocks))


@dataclass(frozen=True, eq=False)
class CompressedDataset:
    """Output of the structured compression.

    Attributes
    ----------
    A_thin : (K_thin * N_r, M) ndarray
        Compressed manifold matrix, rows ``(kappa, n)`` kappa-major.
    kappa : float
        SVD tail ``sqrt(sum_{i>K_thin} sigma_i^2)`` of ``R @ G_hat``.
    K_thin : int
    singular_values : ndarray
        All singular values of ``R @ G_hat``, descending.
    source : TrainingDataset
    G_t : (M_J, K_thin) ndarray
        ``R^{-1} U_1 Sigma_1``; zero rows for inactive columns.
    snapshot_modes : (K_thin, K) ndarray
        Leading right singular vectors ``U_1^R``. Kept for verification, the
        training path never uses them.
    kappa_factor : float
        1, or ``max_m sqrt(|J^m|)`` for the simplified cell variant, where the
        compressed quantity is the expanded matrix rather than ``C`` itself.
    """

    A_thin: np.ndarray
    kappa: float
    K_thin: int
    singular_values: np.ndarray
    source: TrainingDataset
    G_t: np.ndarray
    snapshot_modes: np.ndarray
    kappa_factor: float = 1.0

    @property
    def kappa_effective(self):
        """Upper bound on ``||A - A_bar||_F`` usable in the training bounds."""
        return self.kappa_factor * self.kappa

    @property
    def n_equations(self):
        return self.A_thin.shape[0]


def _rg(ds):
    sqr = structured_qr(ds.N_struct)
    return sqr, sqr.apply_R(ds.G_hat[sqr.columns])


def compressed_singular_values(ds):
    """Singular values of ``R @ G_hat`` (the full list, descending)."""
    _, RG = _rg(ds)
    if RG.size == 0:
        return np.zeros(0)
    return np.linalg.svd(RG, compute_uv=False)


def compress(ds, K_thin=None, rel_tol=None):
    """Structured preprocessing of a training dataset.

    Parameters
    ----------
    ds : TrainingDataset
    K_thin : int, optional
        Compression rank, ``1 <= K_thin <= min(M_J, K)`` (counting active
        columns only).
    rel_tol : float, optional
        Instead of ``K_thin``: pick the rank as :func:`choose_rank` would,
        from the same factorization.

    Returns
    -------
    CompressedDataset

    Notes
    -----
    ``G_t`` carries the ``Sigma_1`` factor so that ``G_t @ U_1^R`` is the
    optimal ``G_p``; without it the compressed data would not reproduce the
    approximation of ``C``.
    """
    if not isinstance(ds, TrainingDataset):
        raise TypeError("expected a TrainingDataset")
    if (K_thin is None) == (rel_tol is None):
        raise ValueError("give exactly one of K_thin and rel_tol")
    sqr, RG = _rg(ds)
    upper = min(sqr.size, ds.K)
    if rel_tol is not None:
        svd = truncated_svd(RG, lambda s: min(choose_rank(s, rel_tol), upper))
        K_thin = svd.k
    else:
        if not 1 <= K_thin <= upper:
            raise DimensionMismatch(f"K_thin={K_thin} outside [1, {upper}]")
        svd = truncated_svd(RG, K_thin)
    n = ds.N_struct
    G_t = np.zeros((n.M_J, K_thin))
    G_t[sqr.columns] = sqr.apply_R_inv(svd.left * svd.singular_values[:K_thin])
    C_thin = n.matmul(G_t)
    factor = 1.0
    if ds.kind is CaseKind.CELL_SIMPLIFIED:
        C_thin = sum_groups(C_thin, n)
        factor = simplified_bound_factor(n)
    A_thin = reorder_C_to_A(C_thin, ds.M, ds.N_r, K_thin)
    return CompressedDataset(
        A_thin=A_thin,
        kappa=tail_energy(svd.singular_values, K_thin),
        K_thin=K_thin,
        singular_values=svd.singular_values,
        source=ds,
        G_t=G_t,
        snapshot_modes=svd.right,
        kappa_factor=factor,
    )


def choose_rank(ds, rel_tol):
    """Smallest ``K_thin`` whose SVD tail is within ``rel_tol`` of the total.

    Accepts a dataset or a precomputed descending singular value array.
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    s = ds if isinstance(ds, np.ndarray) else compressed_singular_values(ds)
    if s.size == 0:
        return 1
    # tails[k] = sqrt(sum_{i>=k} s_i^2), accumulated from the small end
    tails = np.sqrt(np.cumsum((s**2)[::-1])[::-1])
    total = tails[0]
    ok = np.flatnonzero(np.append(tails[1:], 0.0) <= rel_tol * total)
    return max(1, int(ok[0]) + 1)


def simplified_bound_factor(n):
    """``||T_all|| = max_m sqrt(|J^m|)`` for the simplified cell variant."""
    if n.kind is not CaseKind.CELL_SIMPLIFIED:
        raise WrongCaseKind(f"expected cell_simplified, got {n.kind.value}")
    return float(np.sqrt(n.group_sizes.max()))
