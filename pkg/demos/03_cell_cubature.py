"""Cell-based cubature on the same benchmark, general and simplified variants.

Instead of weighting single quadrature points, a cell rule weights whole
mesh cells. The summand of cell m is its local reaction integral tested
against the two P1 hat functions living on it, so |J^m| = 2 and the
structured factor is block diagonal with 2 x 2 blocks (general variant), or
diagonal after expanding each cell into its two nodal parts (simplified
variant). The simplified bound carries an extra factor sqrt(2).

    python demos/03_cell_cubature.py
"""

import numpy as np

from hyperred import (
    bound_report,
    build_cell_dataset,
    build_ls_compressed,
    compress,
    omp_train,
    residual_factored,
)
from hyperred.benchfem import (
    FomProblem,
    ReducedModel,
    collect_snapshots,
    pod_basis,
    simulate_fom,
    spacetime_l2_error,
)

tmpl = FomProblem(n_cells=1000, t_end=1.0)
space = tmpl.space
snaps = collect_snapshots(tmpl, [0.0, 0.5, 1.0], stride=4)
basis = pod_basis(snaps, 12)

# %% local integrals beta^m(f(x^k), phi^i) for i in {m, m + 1}
wf = space.weights[:, None] * snaps.nonlinear            # (M_quad, K)
Phi = space.Phi.tocsc()
cells = space.cell_of_point
local = np.empty((2 * space.n_cells, snaps.K))
for side in (0, 1):
    vals = np.asarray(Phi[np.arange(space.M), cells + side]).ravel()
    local[side::2] = np.add.reduceat(vals[:, None] * wf, np.arange(0, space.M, space.quad_order))
conn = [[m, m + 1] for m in range(space.n_cells)]
h = np.diff(space.nodes)

test = FomProblem(n_cells=1000, t_end=1.0, C=0.75)
fom = simulate_fom(test)

for simplified in (False, True):
    ds = build_cell_dataset(basis.V.T, conn, local, h, simplified=simplified)
    cds = compress(ds, rel_tol=1e-6)
    rule = omp_train(build_ls_compressed(cds), 40)
    rep = bound_report(cds, rule)
    # turn the cell rule into a point rule: every point of a selected cell
    # inherits the cell weight
    sel = np.asarray(rule.indices)
    pts = (sel[:, None] * space.quad_order + np.arange(space.quad_order)).ravel()
    wts = np.repeat(rule.weights[sel], space.quad_order) * space.weights[pts]
    crom = ReducedModel(test, basis, pts, wts).simulate()
    err = spacetime_l2_error(crom.lift(basis), fom, test.space.mass, fom.times)
    name = "simplified" if simplified else "general"
    print(f"{name:10s} K_thin={cds.K_thin:3d} equations={cds.n_equations:5d} "
          f"kappa_eff={cds.kappa_effective:.2e} cells={len(sel):3d} "
          f"eta={residual_factored(ds, rule):.2e} bound={rep.aposteriori:.2e} CROM err={err:.2e}")
