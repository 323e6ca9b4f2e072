"""Sparse empirical quadrature and cubature training with compressed snapshot data.

The training data of an empirical rule is the solution manifold matrix, one
row per (snapshot, reduced test function) pair and one column per summand of
the truth representation. Its structured low-rank compression lets the
sparse non-negative training run on ``K_thin * N_r`` instead of ``K * N_r``
equations, with computable bounds on the price paid.

Modules
-------
kernels      SVD, QR and NNLS building blocks
manifold     truth sum representations and the dense manifold matrix
compression  structured QR + truncated SVD compression
training     orthogonal matching pursuit and training residuals
bounds       a posteriori / a priori bounds for compressed training
benchfem     1D reaction-diffusion FOM / ROM / CROM benchmark
fileio       HRMX matrices, configs, manifests, reports
cli          ``hyperred`` command-line driver
"""

from .bounds import BoundReport, aposteriori, apriori, bound_report
from .compression import (
    CompressedDataset,
    StructuredQr,
    choose_rank,
    compress,
    compressed_singular_values,
    simplified_bound_factor,
    structured_qr,
)
from .errors import *  # noqa: F401,F403
from .kernels import TruncatedSvd, nnls, nnls_fixed_support, qr_dense, tail_energy, truncated_svd
from .manifold import (
    CaseKind,
    SolutionManifoldMatrix,
    StructuredN,
    TrainingDataset,
    assemble_dense_A,
    build_cell_dataset,
    build_quadrature_dataset,
    reorder_A_to_C,
    reorder_C_to_A,
    sum_groups,
)
from .training import (
    LsProblem,
    SparseRule,
    build_ls_compressed,
    build_ls_standard,
    omp_train,
    residual_compressed,
    residual_factored,
    residual_standard,
)

__version__ = "0.1.0"
