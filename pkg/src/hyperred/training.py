"""Sparse non-negative training of empirical rules by orthogonal matching pursuit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compression import CompressedDataset
from .errors import DimensionMismatch
from .kernels import nnls_fixed_support
from .manifold import (
    DEFAULT_MEM_BUDGET,
    SolutionManifoldMatrix,
    assemble_dense_A,
)

__all__ = [
    "LsProblem",
    "SparseRule",
    "build_ls_standard",
    "build_ls_compressed",
    "omp_train",
    "residual_standard",
    "residual_factored",
    "residual_compressed",
    "STOP_BUDGET",
    "STOP_TOLERANCE",
    "STOP_NO_DESCENT",
]

STOP_BUDGET = "budget"
STOP_TOLERANCE = "tolerance"
STOP_NO_DESCENT = "no_descent_candidate"


@dataclass(frozen=True, eq=False)
class LsProblem:
    """Stacked least-squares form ``F(w) = ||A_cal w - g||^2``.

    ``A_cal`` is the (possibly compressed) manifold matrix with ``d^T``
    appended as last row, and ``g = A_cal @ w_truth``.
    """

    A_cal: np.ndarray
    g: np.ndarray
    w_truth: np.ndarray
    active_columns: np.ndarray

    @property
    def M(self):
        return self.A_cal.shape[1]

    @property
    def n_equations(self):
        """Rows of the manifold part (the ``d`` row not counted)."""
        return self.A_cal.shape[0] - 1

    def cost(self, w):
        r = self.A_cal @ w - self.g
        return float(r @ r)


def _ls_problem(A_cal, ds):
    A_cal[-1] = ds.d
    g = A_cal @ ds.truth_weights
    return LsProblem(A_cal, g, ds.truth_weights, np.flatnonzero(ds.active_summands))


def build_ls_standard(A, ds):
    """Standard training problem from the dense manifold matrix.

    Reuses the spare row of ``A`` when it was assembled with
    ``spare_rows=1``, so the multi-gigabyte matrix is not copied.
    """
    if not isinstance(A, SolutionManifoldMatrix):
        A = SolutionManifoldMatrix(np.asarray(A, dtype=float), ds.K, ds.N_r)
    if A.A.shape != (ds.K * ds.N_r, ds.M):
        raise DimensionMismatch(
            f"A has shape {A.A.shape}, dataset implies {(ds.K * ds.N_r, ds.M)}"
        )
    buf = A._buffer
    if buf is not None and buf.shape[0] == A.A.shape[0] + 1:
        A_cal = buf
    else:
        A_cal = np.empty((A.A.shape[0] + 1, ds.M))
        A_cal[:-1] = A.A
    return _ls_problem(A_cal, ds)


def build_ls_compressed(cds):
    """Compressed training problem; the ``d`` row is kept uncompressed."""
    ds = cds.source
    if cds.A_thin.shape[1] != ds.M:
        raise DimensionMismatch("A_thin column count differs from the dataset")
    A_cal = np.empty((cds.A_thin.shape[0] + 1, ds.M))
    A_cal[:-1] = cds.A_thin
    return _ls_problem(A_cal, ds)


@dataclass
class SparseRule:
    """Trained empirical rule.

    Attributes
    ----------
    indices : list of int
        Selected summands in the order OMP picked them.
    weights : (M,) ndarray
        Non-negative on ``indices``, zero elsewhere.
    residual_history : list of float
        ``sqrt(F)`` after each iteration.
    final_residual : float
    M_c : int
        Requested budget.
    stop_reason : str
        ``"budget"``, ``"tolerance"`` or ``"no_descent_candidate"``.
    g_norm : float
        ``||g||`` of the training problem, for scaled reporting.
    iterates : list of ndarray, optional
        Weight vector after every iteration (only with ``keep_iterates``).
    """

    indices: list
    weights: np.ndarray
    residual_history: list
    final_residual: float
    M_c: int
    stop_reason: str = STOP_BUDGET
    g_norm: float = float("nan")
    iterates: list | None = field(default=None, repr=False)

    @property
    def support_size(self):
        return len(self.indices)

    def prefix(self, m):
        """The rule OMP held after ``m`` iterations.

        OMP is deterministic and does not look ahead, so this equals a fresh
        run with ``M_c = m``.
        """
        if self.iterates is None:
            raise ValueError("rule was trained without keep_iterates=True")
        m = min(m, len(self.indices))
        if m < 1:
            raise ValueError("m must be positive")
        return SparseRule(
            indices=list(self.indices[:m]),
            weights=self.iterates[m - 1].copy(),
            residual_history=list(self.residual_history[:m]),
            final_residual=self.residual_history[m - 1],
            M_c=m,
            stop_reason=STOP_BUDGET if m < len(self.indices) else self.stop_reason,
            g_norm=self.g_norm,
            iterates=[w.copy() for w in self.iterates[:m]],
        )

    def to_dict(self):
        return {
            "indices": [int(i) for i in self.indices],
            "weights": [float(x) for x in self.weights],
            "residual_history": [float(x) for x in self.residual_history],
            "final_residual": float(self.final_residual),
            "M_c": int(self.M_c),
            "stop_reason": self.stop_reason,
            "g_norm": float(self.g_norm),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            indices=[int(i) for i in data["indices"]],
            weights=np.asarray(data["weights"], dtype=float),
            residual_history=[float(x) for x in data["residual_history"]],
            final_residual=float(data["final_residual"]),
            M_c=int(data["M_c"]),
            stop_reason=data.get("stop_reason", STOP_BUDGET),
            g_norm=float(data.get("g_norm", float("nan"))),
        )

    @classmethod
    def truth(cls, ds):
        """The unreduced rule: every summand with its truth weight."""
        M = ds.M
        return cls(
            indices=list(range(M)),
            weights=ds.truth_weights.copy(),
            residual_history=[0.0],
            final_residual=0.0,
            M_c=M,
        )


def omp_train(p, M_c, stop_tol=0.0, keep_iterates=False):
    """Orthogonal matching pursuit on ``F(w) = ||A_cal w - g||^2``.

    Each iteration adds the candidate with the most negative gradient
    component (lowest index on ties) and re-solves the non-negative least
    squares problem on the enlarged support.

    Parameters
    ----------
    p : LsProblem
    M_c : int
        Maximum number of selected summands.
    stop_tol : float
        Stop once ``sqrt(F) <= stop_tol * ||g||``. The default 0 runs the full
        budget unless the fit becomes exact.
    keep_iterates : bool
        Store the weight vector of every iteration (see ``SparseRule.prefix``).

    Returns
    -------
    SparseRule
        If no candidate has a negative gradient component the loop ends early
        and ``stop_reason`` is ``"no_descent_candidate"``; this is not an error.
    """
    n_active = p.active_columns.size
    if not 1 <= M_c <= n_active:
        raise ValueError(f"M_c={M_c} outside [1, {n_active}]")
    if stop_tol < 0:
        raise ValueError("stop_tol must be non-negative")
    A, g = p.A_cal, p.g
    g_norm = float(np.linalg.norm(g))
    guard = 1e-12 * g_norm * float(np.linalg.norm(A))

    candidate = np.zeros(p.M, dtype=bool)
    candidate[p.active_columns] = True
    w = np.zeros(p.M)
    r = -g
    res = g_norm
    support, history = [], []
    iterates = [] if keep_iterates else None
    reason = STOP_BUDGET
    for _ in range(M_c):
        if res <= stop_tol * g_norm:
            reason = STOP_TOLERANCE
            break
        score = np.where(candidate, -2.0 * (A.T @ r), -np.inf)
        j = int(np.argmax(score))
        if not score[j] > guard:
            reason = STOP_NO_DESCENT
            break
        support.append(j)
        candidate[j] = False
        w_new, res_new = nnls_fixed_support(A, g, support)
        # the previous iterate is feasible for the larger support
        if res_new <= res:
            w, res = w_new, res_new
        r = A[:, support] @ w[support] - g
        history.append(res)
        if keep_iterates:
            iterates.append(w.copy())
    else:
        if res <= stop_tol * g_norm:
            reason = STOP_TOLERANCE
    return SparseRule(
        indices=support,
        weights=w,
        residual_history=history,
        final_residual=res,
        M_c=M_c,
        stop_reason=reason,
        g_norm=g_norm,
        iterates=iterates,
    )


def _weights_of(rule_or_w):
    return rule_or_w.weights if isinstance(rule_or_w, SparseRule) else np.asarray(rule_or_w)


def residual_standard(ds, rule, mem_budget=DEFAULT_MEM_BUDGET):
    """``eta(w) = ||A (w - w_truth)||`` against the dense manifold matrix."""
    w = _weights_of(rule)
    if w.shape != (ds.M,):
        raise DimensionMismatch("rule does not match the dataset")
    A = assemble_dense_A(ds, mem_budget=mem_budget).A
    return float(np.linalg.norm(A @ (w - ds.truth_weights)))


def residual_factored(ds, rule):
    """``eta(w)`` through the factorization: ``||P diag(T^T v) G_hat||_F``.

    Same value as :func:`residual_standard` without the dense matrix.
    """
    w = _weights_of(rule)
    if w.shape != (ds.M,):
        raise DimensionMismatch("rule does not match the dataset")
    v = np.repeat(w - ds.truth_weights, ds.N_struct.group_sizes)
    return float(np.linalg.norm((ds.N_struct.P * v) @ ds.G_hat))


def residual_compressed(cds, rule):
    """``eta_hat(w) = ||A_thin (w - w_truth)||``."""
    if not isinstance(cds, CompressedDataset):
        raise TypeError("expected a CompressedDataset")
    w = _weights_of(rule)
    return float(np.linalg.norm(cds.A_thin @ (w - cds.source.truth_weights)))
