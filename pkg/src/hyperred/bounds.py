"""Error bounds relating the compressed training residual to the true one.

For a rule ``w`` trained on compressed data,

    eta(w) <= eta_hat(w) + kappa * ||w - w_truth||                (a posteriori)
    eta(w) <= eta_hat(w) + kappa * (sqrt(M_c) / d_min * (eps + d^T w_truth)
                                   + ||w_truth||)                 (a priori)

with ``eps = |d^T (w - w_truth)|``. The second inequality follows from the
first via ``||w|| <= sqrt(M_c) ||w||_1 <= sqrt(M_c) d^T w / d_min``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NonPositiveDMin
from .training import SparseRule, residual_compressed

__all__ = ["BoundReport", "aposteriori", "apriori", "bound_report"]


@dataclass(frozen=True)
class BoundReport:
    eta_thin: float
    kappa: float
    w_dev_norm: float
    aposteriori: float
    epsilon: float
    d_min: float
    d_dot_wtruth: float
    wtruth_norm: float
    M_c: int
    apriori: float

    def to_dict(self):
        return asdict(self)


def bound_report(cds, rule):
    """Evaluate both bounds for ``rule`` on compressed data ``cds``.

    ``kappa`` is the effective compression error: the SVD tail, scaled by
    ``max_m sqrt(|J^m|)`` in the simplified cell variant. ``M_c`` is the
    number of selected summands, the tightest admissible value.
    """
    ds = cds.source
    w = rule.weights if isinstance(rule, SparseRule) else np.asarray(rule, dtype=float)
    d_min = float(np.min(ds.d))
    if not d_min > 0:
        raise NonPositiveDMin(f"d_min = {d_min}")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    n_sel = len(rule.indices) if isinstance(rule, SparseRule) else int(np.count_nonzero(w))
    dev = w - ds.truth_weights
    eta_thin = residual_compressed(cds, w)
    kappa = float(cds.kappa_effective)
    w_dev = float(np.linalg.norm(dev))
    eps = float(abs(ds.d @ dev))
    d_w = float(ds.d @ ds.truth_weights)
    w_norm = float(np.linalg.norm(ds.truth_weights))
    return BoundReport(
        eta_thin=eta_thin,
        kappa=kappa,
        w_dev_norm=w_dev,
        aposteriori=eta_thin + kappa * w_dev,
        epsilon=eps,
        d_min=d_min,
        d_dot_wtruth=d_w,
        wtruth_norm=w_norm,
        M_c=n_sel,
        apriori=eta_thin + kappa * (math.sqrt(n_sel) / d_min * (eps + d_w) + w_norm),
    )


def aposteriori(cds, rule):
    """Bound report; its ``aposteriori`` field bounds ``eta(w)``."""
    return bound_report(cds, rule)


def apriori(cds, rule):
    """Bound report; its ``apriori`` field is independent of ``w`` up to ``eps``."""
    return bound_report(cds, rule)
