"""Shared generators and oracles for the test-suite."""

import itertools

import numpy as np
import pytest
from scipy.optimize import nnls as scipy_nnls

from hyperred import build_cell_dataset, build_quadrature_dataset
from hyperred.manifold import CaseKind

KINDS = [CaseKind.QUADRATURE, CaseKind.CELL_GENERAL, CaseKind.CELL_SIMPLIFIED]


def low_rank(rng, rows, cols, rank, noise=1e-3):
    """Random matrix with a decaying spectrum: rank ``rank`` plus small noise."""
    rank = max(1, min(rank, rows, cols))
    X = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
    return X + noise * rng.standard_normal((rows, cols))


def random_dataset(rng, kind, M=None, K=None, N_r=None, group_size=2, noise=1e-3):
    """Seeded random training dataset with ``M <= 50``, ``K <= 40``, ``N_r <= 8``."""
    kind = CaseKind(kind)
    M = M or int(rng.integers(4, 51))
    K = K or int(rng.integers(2, 41))
    rank = int(rng.integers(1, 8))
    if kind is CaseKind.QUADRATURE:
        N_r = N_r or int(rng.integers(1, 9))
        P = rng.standard_normal((N_r, M))
        G = low_rank(rng, M, K, rank, noise)
        w = rng.uniform(0.5, 2.0, M)
        return build_quadrature_dataset(P, G, w)
    # 1D-like connectivity: cell m touches nodes m .. m + group_size - 1
    N_r = N_r or int(rng.integers(group_size, 9))
    n_nodes = M + group_size - 1
    lam = rng.standard_normal((N_r, n_nodes))
    conn = [list(range(m, m + group_size)) for m in range(M)]
    G = low_rank(rng, M * group_size, K, rank, noise)
    meas = rng.uniform(0.5, 1.5, M)
    w = rng.uniform(0.5, 2.0, M)
    return build_cell_dataset(
        lam, conn, G, meas, truth_weights=w, simplified=kind is CaseKind.CELL_SIMPLIFIED
    )


def dense_A_oracle(ds):
    """``A[(k, n), m] = sum_{j in J^m} p^n_j g^k_j`` by explicit loops."""
    n = ds.N_struct
    K, N_r, M = ds.K, ds.N_r, ds.M
    off = n.offsets
    A = np.zeros((K * N_r, M))
    for k in range(K):
        for i in range(N_r):
            for m in range(M):
                s = slice(off[m], off[m + 1])
                A[k * N_r + i, m] = n.P[i, s] @ ds.G_hat[s, k]
    return A


def brute_force_best(A_cal, g, size, candidates):
    """Smallest NNLS residual over every support of exactly ``size`` candidates."""
    best, best_set = np.inf, None
    for S in itertools.combinations(candidates, size):
        _, r = scipy_nnls(A_cal[:, list(S)], g)
        if r < best:
            best, best_set = r, set(S)
    return best, best_set


def assert_monotone(rule):
    h = np.asarray(rule.residual_history)
    assert np.all(np.diff(h) <= 0.0), h


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def explicit_N(ds):
    """Dense ``N`` built entry by entry from ``P`` and the group sizes.

    Quadrature / simplified cells: row ``(n, j)`` has ``p^n_j`` in column ``j``.
    General cells: row ``(n, m)`` has ``p_hat^n_j`` in every column ``j`` of
    group ``m``.
    """
    n = ds.N_struct
    P, sizes = n.P, n.group_sizes
    N_r, M_J = P.shape
    general = ds.kind is CaseKind.CELL_GENERAL
    rows_per = len(sizes) if general else M_J
    N = np.zeros((N_r * rows_per, M_J))
    for i in range(N_r):
        j = 0
        for m, size in enumerate(sizes):
            for _ in range(size):
                N[i * rows_per + (m if general else j), j] = P[i, j]
                j += 1
    return N


def expansion_oracle(ds):
    """``T_all``: ``N_r`` diagonal copies of the group-summing matrix."""
    sizes = ds.N_struct.group_sizes
    T = np.zeros((len(sizes), int(sizes.sum())))
    j = 0
    for m, size in enumerate(sizes):
        T[m, j : j + size] = 1.0
        j += size
    return np.kron(np.eye(ds.N_r), T)


def dense_compression_oracle(ds, k):
    """Best rank-``k`` approximation of ``C = N G`` within ``range(N)``.

    Returns ``(C, C_bar, sigma)`` from a dense QR of the explicit ``N`` and a
    dense SVD; ``C`` is the matrix the structured compression approximates
    (the expanded one for simplified cells).
    """
    N = explicit_N(ds)
    cols = np.flatnonzero(np.any(N != 0, axis=0))
    Q, R = np.linalg.qr(N[:, cols])
    C = N @ ds.G_hat
    B = Q.T @ C
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    C_bar = Q @ ((U[:, :k] * s[:k]) @ Vt[:k])
    return C, C_bar, s


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
