"""Standard vs compressed training on the 1D reaction-diffusion benchmark.

Snapshots come from three training scenarios C in {0, 0.5, 1}; the reduced
model uses a 20-dimensional POD basis, and empirical quadrature rules are
trained once on the full manifold matrix and once on its compression. The
CROM error is measured on the unseen scenario C = 0.75.

Takes about 10 s and 1 GB of memory (the dense matrix of the standard
training is ~700 MB, which is the point of the exercise).

    python demos/02_reaction_diffusion.py [out.csv]
"""

import csv
import sys
import time

from hyperred import assemble_dense_A, build_ls_compressed, build_ls_standard, compress, omp_train
from hyperred.benchfem import (
    FomProblem,
    collect_snapshots,
    pod_basis,
    quadrature_training_dataset,
    run_crom,
    run_rom,
    simulate_fom,
    spacetime_l2_error,
)

SWEEP = [10, 20, 40, 60, 80]

# %% offline: snapshots and POD basis
t0 = time.perf_counter()
tmpl = FomProblem()
snaps = collect_snapshots(tmpl, [0.0, 0.5, 1.0], stride=2)
basis = pod_basis(snaps, 20)
ds = quadrature_training_dataset(tmpl, basis, snaps)
print(f"FOM snapshots: K={ds.K}, M={ds.M} points, N_r={ds.N_r} ({time.perf_counter() - t0:.1f} s)")
print(f"POD singular values 1, 10, 20: {basis.singular_values[[0, 9, 19]]}")

# %% compressed training
t0 = time.perf_counter()
cds = compress(ds, rel_tol=1e-6)
t_comp = time.perf_counter() - t0
t0 = time.perf_counter()
rule_c = omp_train(build_ls_compressed(cds), max(SWEEP), keep_iterates=True)
t_train_c = time.perf_counter() - t0
print(f"\ncompressed: K_thin={cds.K_thin} ({cds.K_thin / ds.K:.3%} of K), "
      f"{cds.n_equations} equations, kappa={cds.kappa:.2e}")
print(f"  compression {t_comp:.2f} s, training {t_train_c:.2f} s")

# %% standard training on the dense matrix
t0 = time.perf_counter()
p_std = build_ls_standard(assemble_dense_A(ds, spare_rows=1), ds)
t_asm = time.perf_counter() - t0
t0 = time.perf_counter()
rule_s = omp_train(p_std, max(SWEEP), keep_iterates=True)
t_train_s = time.perf_counter() - t0
print(f"standard:   {p_std.n_equations} equations, dense A {ds.dense_bytes / 2**20:.0f} MiB")
print(f"  assembly {t_asm:.2f} s, training {t_train_s:.2f} s")
del p_std

# %% online: errors on the test scenario
test = FomProblem(C=0.75)
fom = simulate_fom(test)
mass = test.space.mass
rom = run_rom(test, basis)
err_rom = spacetime_l2_error(rom.lift(basis), fom, mass, fom.times)
print(f"\nROM error (all {ds.M} points): {err_rom:.3e}")

rows = []
print(" M_c   compressed   standard")
for m in SWEEP:
    e = {}
    for mode, rule in (("compressed", rule_c), ("standard", rule_s)):
        traj = run_crom(test, basis, rule.prefix(m))
        e[mode] = spacetime_l2_error(traj.lift(basis), fom, mass, fom.times)
        rows.append({"M_c": m, "mode": mode, "rel_error": e[mode], "runtime_s": traj.runtime})
    print(f"{m:4d}   {e['compressed']:.3e}    {e['standard']:.3e}")

if len(sys.argv) > 1:
    with open(sys.argv[1], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {sys.argv[1]}")
