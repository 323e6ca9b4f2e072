"""Compressing a small empirical quadrature problem and checking the bounds.

A random quadrature dataset stands in for real snapshot data. We compress it
at a few ranks, look at how the compression error kappa relates to the dense
matrix it replaces, then train sparse rules on the compressed data and
compare the bounds with the true training residual.

    python demos/01_compression_and_bounds.py
"""

import numpy as np

from hyperred import (
    assemble_dense_A,
    bound_report,
    build_ls_compressed,
    build_quadrature_dataset,
    compress,
    omp_train,
    reorder_A_to_C,
    reorder_C_to_A,
    residual_standard,
)

rng = np.random.default_rng(0)

# %% data: 6 reduced test functions, 200 points, 60 snapshots of low rank
N_r, M, K = 6, 200, 60
x = np.linspace(0, 1, M)
P = np.vstack([np.cos(np.pi * n * x) for n in range(N_r)])
modes = np.vstack([np.exp(-((x - c) ** 2) / 0.02) for c in np.linspace(0.1, 0.9, 8)])
G = (rng.standard_normal((K, 8)) * 0.5 ** np.arange(8)).dot(modes).T
w_truth = np.full(M, 1.0 / M)
ds = build_quadrature_dataset(P, G, w_truth)
A = assemble_dense_A(ds).A
print(f"dense A: {A.shape[0]} x {A.shape[1]} = {A.size} entries")

# %% kappa is exactly the distance between A and its surrogate
print("\n K_thin   rows    kappa       ||A - A_bar||")
for k in (1, 2, 4, 6, 8):
    cds = compress(ds, k)
    C_bar = reorder_A_to_C(cds.A_thin, M, N_r, k) @ cds.snapshot_modes
    A_bar = reorder_C_to_A(C_bar, M, N_r, K)
    print(f"{k:6d} {cds.n_equations:6d}  {cds.kappa:.4e}  {np.linalg.norm(A - A_bar):.4e}")

# %% train on K_thin = 4 and compare eta with the bounds
cds = compress(ds, 4)
rule = omp_train(build_ls_compressed(cds), 20, keep_iterates=True)
print("\n M_c   eta_thin    eta         a posteriori  a priori")
for m in (2, 5, 10, 20):
    sub = rule.prefix(m)
    rep = bound_report(cds, sub)
    eta = residual_standard(ds, sub)
    print(f"{m:4d}  {rep.eta_thin:.3e}  {eta:.3e}  {rep.aposteriori:.3e}     {rep.apriori:.3e}")

# the a posteriori bound is usable; the a priori one is mostly a statement
# about scaling with kappa.
