"""Training data for empirical quadrature and cell-based cubature.

The projected nonlinearity is a truth sum over ``M`` localized summands.
For snapshot ``k`` and reduced test function ``n`` the summand values form the
vector ``a^{k,n}``; all of them together form the solution manifold matrix

    A[(k, n), m] = a^{k,n}_m,      rows ordered k-major, n-minor.

The same entries arranged n-major over rows and snapshot-wise over columns
give the matricization ``C = N @ G_hat`` that the compression works on. ``N``
is never stored densely; :class:`StructuredN` keeps only the coefficient
blocks ``p^n`` (quadrature) or ``p_hat^n`` (cells).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    MemoryBudgetExceeded,
    NonPositiveTruthWeight,
    ZeroCellMeasure,
)

__all__ = [
    "CaseKind",
    "StructuredN",
    "TrainingDataset",
    "SolutionManifoldMatrix",
    "DEFAULT_MEM_BUDGET",
    "build_quadrature_dataset",
    "build_cell_dataset",
    "assemble_dense_A",
    "reorder_C_to_A",
    "reorder_A_to_C",
    "sum_groups",
]

DEFAULT_MEM_BUDGET = 2 * 1024**3


class CaseKind(str, enum.Enum):
    QUADRATURE = "quadrature"
    CELL_GENERAL = "cell_general"
    CELL_SIMPLIFIED = "cell_simplified"


def _as_finite(x, name, ndim):
    x = np.asarray(x, dtype=float)
    if x.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return x


@dataclass(frozen=True, eq=False)
class StructuredN:
    """Sparse structured factor ``N`` of the snapshot matricization.

    Parameters
    ----------
    kind : CaseKind
    P : (N_r, M_J) ndarray
        Row ``n`` holds ``p^n`` (quadrature) or the concatenated ``p_hat^n``.
    group_sizes : (M,) int ndarray
        ``|J^m|`` per summand; all ones for quadrature.

    Notes
    -----
    Quadrature and the simplified cell variant use
    ``N = [diag(p^1); ...; diag(p^{N_r})]`` with ``N_r * M_J`` rows. The general
    cell variant uses ``N = [T diag(p_hat^1); ...]`` with ``N_r * M`` rows,
    where ``T`` sums the entries of each group.
    """

    kind: CaseKind
    P: np.ndarray
    group_sizes: np.ndarray

    def __post_init__(self):
        P = _as_finite(self.P, "P", 2)
        sizes = np.asarray(self.group_sizes, dtype=np.int64).reshape(-1)
        if np.any(sizes < 1):
            raise DimensionMismatch("every summand needs at least one entry")
        if sizes.sum() != P.shape[1]:
            raise DimensionMismatch(
                f"group sizes sum to {sizes.sum()}, P has {P.shape[1]} columns"
            )
        if self.kind is CaseKind.QUADRATURE and np.any(sizes != 1):
            raise DimensionMismatch("quadrature summands have exactly one entry")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "group_sizes", sizes)
        object.__setattr__(self, "kind", CaseKind(self.kind))

    @property
    def N_r(self):
        return self.P.shape[0]

    @property
    def M(self):
        return self.group_sizes.size

    @property
    def M_J(self):
        return self.P.shape[1]

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.group_sizes)])

    @property
    def group_of_column(self):
        return np.repeat(np.arange(self.M), self.group_sizes)

    @property
    def diagonal(self):
        """True when the QR factor of ``N`` is diagonal."""
        return self.kind is not CaseKind.CELL_GENERAL

    @property
    def column_active(self):
        """Columns of ``N`` that are not identically zero."""
        return np.any(self.P != 0.0, axis=0)

    @property
    def summand_active(self):
        return np.logical_or.reduceat(self.column_active, self.offsets[:-1])

    @property
    def n_rows(self):
        return self.N_r * (self.M_J if self.diagonal else self.M)

    def matmul(self, G):
        """``N @ G`` without forming ``N``."""
        G = np.asarray(G, dtype=float)
        if G.ndim != 2 or G.shape[0] != self.M_J:
            raise DimensionMismatch(f"G must have {self.M_J} rows")
        prod = self.P[:, :, None] * G[None, :, :]
        if not self.diagonal:
            prod = np.add.reduceat(prod, self.offsets[:-1], axis=1)
        return prod.reshape(-1, G.shape[1])

    def dense(self):
        """Explicit ``N``; only meant for small oracle checks."""
        N_r, M_J = self.P.shape
        blocks = []
        for n in range(N_r):
            block = np.diag(self.P[n])
            if not self.diagonal:
                block = np.add.reduceat(block, self.offsets[:-1], axis=0)
            blocks.append(block)
        return np.vstack(blocks)

    def expansion(self):
        """The group-summing matrix ``T`` (``M x M_J``)."""
        T = np.zeros((self.M, self.M_J))
        T[self.group_of_column, np.arange(self.M_J)] = 1.0
        return T


def sum_groups(C, n_struct):
    """Apply ``T_all`` (``N_r`` copies of ``T``) to a matrix in ``N_r*M_J``-row layout."""
    C = np.asarray(C)
    N_r, M_J = n_struct.N_r, n_struct.M_J
    if C.shape[0] != N_r * M_J:
        raise DimensionMismatch("row count must be N_r * M_J")
    C3 = C.reshape(N_r, M_J, -1)
    return np.add.reduceat(C3, n_struct.offsets[:-1], axis=1).reshape(
        N_r * n_struct.M, -1
    )


@dataclass(frozen=True, eq=False)
class TrainingDataset:
    """Truth sum representation ``C = N @ G_hat`` plus weights and ``d``.

    Attributes
    ----------
    N_struct : StructuredN
    G_hat : (M_J, K) ndarray
        Snapshot columns ``g^k`` (quadrature) or ``g_hat^k`` (cells).
    truth_weights : (M,) ndarray
        Strictly positive truth weights.
    d : (M,) ndarray
        Regularization vector, ``d_m = beta^m(1, 1)``.
    """

    N_struct: StructuredN
    G_hat: np.ndarray
    truth_weights: np.ndarray
    d: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        G = _as_finite(self.G_hat, "G_hat", 2)
        w = _as_finite(self.truth_weights, "truth_weights", 1)
        d = _as_finite(self.d, "d", 1)
        n = self.N_struct
        if G.shape[0] != n.M_J:
            raise DimensionMismatch(f"G_hat has {G.shape[0]} rows, expected M_J={n.M_J}")
        if G.shape[1] < 1:
            raise DimensionMismatch("at least one snapshot is required")
        if w.shape != (n.M,) or d.shape != (n.M,):
            raise DimensionMismatch("truth_weights and d need one entry per summand")
        if np.any(w <= 0):
            raise NonPositiveTruthWeight("truth weights must be strictly positive")
        if np.any(d <= 0):
            raise ZeroCellMeasure("regularization vector d must be strictly positive")
        object.__setattr__(self, "G_hat", G)
        object.__setattr__(self, "truth_weights", w)
        object.__setattr__(self, "d", d)

    @property
    def kind(self):
        return self.N_struct.kind

    @property
    def K(self):
        return self.G_hat.shape[1]

    @property
    def M(self):
        return self.N_struct.M

    @property
    def N_r(self):
        return self.N_struct.N_r

    @property
    def M_J(self):
        return self.N_struct.M_J

    @property
    def active_summands(self):
        return self.N_struct.summand_active

    @property
    def n_equations(self):
        return self.K * self.N_r

    @property
    def dense_bytes(self):
        return 8 * self.K * self.N_r * self.M

    def c_matrix(self):
        """The matricization ``C`` with ``N_r * M`` rows (n-major)."""
        C = self.N_struct.matmul(self.G_hat)
        if self.kind is CaseKind.CELL_SIMPLIFIED:
            C = sum_groups(C, self.N_struct)
        return C


def build_quadrature_dataset(points_eval_basis, nonlinearity_snapshots, truth_weights):
    """Empirical quadrature data: ``a^{k,n} = g^k * p^n`` (Hadamard).

    Parameters
    ----------
    points_eval_basis : (N_r, M) array_like
        Row ``n`` is ``p^n``, the ``n``-th reduced test function at the
        quadrature points.
    nonlinearity_snapshots : (M, K) array_like
        Column ``k`` is ``g^k``, the nonlinearity at the quadrature points.
    truth_weights : (M,) array_like
    """
    P = _as_finite(points_eval_basis, "points_eval_basis", 2)
    G = _as_finite(nonlinearity_snapshots, "nonlinearity_snapshots", 2)
    w = _as_finite(truth_weights, "truth_weights", 1)
    M = P.shape[1]
    if P.shape[0] < 1 or M < 1:
        raise DimensionMismatch("need at least one test function and one point")
    if G.shape[0] != M or w.shape != (M,):
        raise DimensionMismatch(
            f"inconsistent sizes: p^n has {M} entries, g^k {G.shape[0]}, weights {w.shape}"
        )
    if G.shape[1] < 1:
        raise DimensionMismatch("at least one snapshot is required")
    if np.any(w <= 0):
        raise NonPositiveTruthWeight("truth weights must be strictly positive")
    n_struct = StructuredN(CaseKind.QUADRATURE, P, np.ones(M, dtype=np.int64))
    return TrainingDataset(n_struct, G, w, np.ones(M))


def build_cell_dataset(
    rom_coeffs,
    connectivity,
    local_integrals,
    cell_measures,
    truth_weights=None,
    simplified=False,
):
    """Cell-based cubature data from per-cell local integrals.

    Parameters
    ----------
    rom_coeffs : (N_r, N) array_like
        ``lambda^n_i``: the reduced test functions in the full-order basis.
    connectivity : sequence of int sequences, or (M, nodes) int array
        ``J^m``: full-order basis indices whose local form on cell ``m`` does
        not vanish.
    local_integrals : (M_J, K) array_like
        Rows ordered like the concatenated connectivity; the row for
        ``(m, i)`` holds ``beta^m(f(x^k), phi^i)`` for every snapshot ``k``.
    cell_measures : (M,) array_like
        ``|Omega_m|``; becomes the regularization vector ``d``.
    truth_weights : (M,) array_like, optional
        Defaults to ones (plain summation over cells).
    simplified : bool
        Build the simplified variant, whose QR factor is diagonal.
    """
    lam = _as_finite(rom_coeffs, "rom_coeffs", 2)
    groups = [np.asarray(J, dtype=np.int64).reshape(-1) for J in connectivity]
    if not groups:
        raise DimensionMismatch("at least one cell is required")
    sizes = np.array([J.size for J in groups], dtype=np.int64)
    if np.any(sizes < 1):
        raise DimensionMismatch("every cell needs |J^m| >= 1")
    flat = np.concatenate(groups)
    if np.any(flat < 0) or np.any(flat >= lam.shape[1]):
        raise DimensionMismatch("connectivity index outside the full-order basis")
    G = _as_finite(local_integrals, "local_integrals", 2)
    if G.shape[0] != flat.size:
        raise DimensionMismatch(
            f"local_integrals has {G.shape[0]} rows, connectivity implies {flat.size}"
        )
    meas = _as_finite(cell_measures, "cell_measures", 1)
    M = len(groups)
    if meas.shape != (M,):
        raise DimensionMismatch("one measure per cell expected")
    if np.any(meas <= 0):
        raise ZeroCellMeasure("cell measures must be strictly positive")
    w = np.ones(M) if truth_weights is None else _as_finite(truth_weights, "truth_weights", 1)
    if w.shape != (M,):
        raise DimensionMismatch("one truth weight per cell expected")
    if np.any(w <= 0):
        raise NonPositiveTruthWeight("truth weights must be strictly positive")
    kind = CaseKind.CELL_SIMPLIFIED if simplified else CaseKind.CELL_GENERAL
    n_struct = StructuredN(kind, lam[:, flat], sizes)
    return TrainingDataset(n_struct, G, w, meas, meta={"connectivity": groups})


@dataclass(frozen=True, eq=False)
class SolutionManifoldMatrix:
    """Dense ``A`` (``K*N_r x M``), rows k-major / n-minor."""

    A: np.ndarray
    K: int
    N_r: int
    # backing array with spare rows so the stacked least-squares operator
    # can reuse the allocation
    _buffer: np.ndarray | None = None

    def row(self, k, n):
        return self.A[k * self.N_r + n]


def _check_budget(n_bytes, mem_budget):
    if mem_budget is not None and n_bytes > mem_budget:
        raise MemoryBudgetExceeded(n_bytes, mem_budget)


def assemble_dense_A(ds, mem_budget=DEFAULT_MEM_BUDGET, spare_rows=0):
    """Materialize the uncompressed solution manifold matrix.

    This is exactly the allocation that the compressed path avoids, so it is
    guarded by ``mem_budget`` (bytes; ``None`` disables the guard).
    """
    if not isinstance(ds, TrainingDataset):
        raise TypeError("expected a TrainingDataset")
    K, N_r, M = ds.K, ds.N_r, ds.M
    rows = K * N_r
    _check_budget(8 * (rows + spare_rows) * M, mem_budget)
    buf = np.empty((rows + spare_rows, M))
    A3 = buf[:rows].reshape(K, N_r, M)
    n = ds.N_struct
    G = ds.G_hat
    if n.kind is CaseKind.QUADRATURE:
        np.multiply(G.T[:, None, :], n.P[None, :, :], out=A3)
    else:
        # chunk over snapshots to bound the N_r x M_J temporaries
        step = max(1, int(2**24 // max(1, N_r * n.M_J)))
        starts = n.offsets[:-1]
        for k0 in range(0, K, step):
            k1 = min(K, k0 + step)
            prod = G.T[k0:k1, None, :] * n.P[None, :, :]
            A3[k0:k1] = np.add.reduceat(prod, starts, axis=2)
    return SolutionManifoldMatrix(buf[:rows], K, N_r, buf if spare_rows else None)


def reorder_C_to_A(C_thin, M, N_r, K_thin):
    """Permute an n-major ``(N_r*M, K_thin)`` matrix into ``(K_thin*N_r, M)``.

    ``A[(kappa, n), m] = C[(n, m), kappa]``.
    """
    C = np.asarray(C_thin)
    if C.shape != (N_r * M, K_thin):
        raise DimensionMismatch(
            f"C_thin has shape {C.shape}, expected {(N_r * M, K_thin)}"
        )
    return np.ascontiguousarray(C.reshape(N_r, M, K_thin).transpose(2, 0, 1)).reshape(
        K_thin * N_r, M
    )


def reorder_A_to_C(A, M, N_r, K):
    """Inverse of :func:`reorder_C_to_A`."""
    A = np.asarray(A)
    if A.shape != (K * N_r, M):
        raise DimensionMismatch(f"A has shape {A.shape}, expected {(K * N_r, M)}")
    return np.ascontiguousarray(A.reshape(K, N_r, M).transpose(1, 2, 0)).reshape(
        N_r * M, K
    )
