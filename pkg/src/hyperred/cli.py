"""Command-line driver for the reaction-diffusion training pipeline.

Every command works on one run directory (``--out``)::

    hyperred gen-snapshots --config cfg.json --out run/
    hyperred compress --out run/ --rel-tol 1e-6
    hyperred train --out run/ --mode compressed --mc 20 40 60 80 --rel-tol 1e-6
    hyperred train --out run/ --mode standard --mc 20 40 60 80
    hyperred bound --out run/ --rule run/rule_compressed_mc80.json --rel-tol 1e-6
    hyperred crom-eval --out run/
    hyperred report run/run_*.json --out run/

``manifest.json`` in the run directory describes the snapshot data; each
training run adds ``rule_<mode>_mc<M_c>.json`` and a run manifest
``run_<mode>_mc<M_c>.json`` carrying dimensions, residuals, bounds and
timings. The pipeline is deterministic; ``--seed`` is only recorded.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path

import numpy as np

from . import benchfem as bf
from .bounds import bound_report
from .compression import compress
from .errors import HyperredError, NewtonDiverged
from .fileio import (
    SCHEMA_VERSION,
    atomic_write_bytes,
    load_config,
    load_rule,
    read_hrmx,
    read_json,
    report_row,
    save_rule,
    validate_manifest,
    write_hrmx,
    write_json,
    write_report,
)
from .manifold import DEFAULT_MEM_BUDGET, assemble_dense_A
from .training import (
    build_ls_compressed,
    build_ls_standard,
    omp_train,
    residual_factored,
)

MANIFEST = "manifest.json"


def _ms(t0):
    return 1e3 * (time.perf_counter() - t0)


# --------------------------------------------------------------------------- #
# loading a run directory
# --------------------------------------------------------------------------- #


def _load_run(out):
    out = Path(out)
    manifest = validate_manifest(read_json(out / MANIFEST), out)
    cfg = load_config(manifest["config"])
    files = manifest["files"]
    V = read_hrmx(out / files["basis"]["path"])
    sv = read_hrmx(out / files["pod_singular_values"]["path"]).ravel()
    nonlinear = read_hrmx(out / files["nonlinear"]["path"])
    basis = bf.RomBasis(V, sv)
    p = cfg.problem(cfg.train[0])
    ds = bf.build_quadrature_dataset(
        np.asarray(p.space.Phi @ V).T, nonlinear, p.space.weights
    )
    return manifest, cfg, basis, ds


def _compress_from_args(args, ds):
    """Compress with ``--kthin`` or ``--rel-tol`` (default rel-tol 1e-6)."""
    if args.kthin is not None:
        return compress(ds, args.kthin)
    return compress(ds, rel_tol=args.rel_tol or 1e-6)


# --------------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------------- #


def cmd_gen_snapshots(args):
    cfg = load_config(args.config)
    out = Path(args.out)
    t0 = time.perf_counter()
    snaps = bf.collect_snapshots(cfg.problem(cfg.train[0]), cfg.train, cfg.stride)
    basis = bf.pod_basis(snaps, cfg.N_r)
    elapsed = _ms(t0)
    files = {
        "states": ("states.hrmx", snaps.states),
        "nonlinear": ("nonlinear.hrmx", snaps.nonlinear),
        "basis": ("basis.hrmx", basis.V),
        "pod_singular_values": ("pod_singular_values.hrmx", basis.singular_values[None, :]),
        "snapshot_times": ("snapshot_times.hrmx", snaps.times[None, :]),
        "snapshot_scenarios": ("snapshot_scenarios.hrmx", snaps.scenarios[None, :]),
    }
    entries = {}
    for name, (fname, arr) in files.items():
        write_hrmx(out / fname, arr)
        entries[name] = {"path": fname, "shape": list(arr.shape)}
    space = cfg.problem(cfg.train[0]).space
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "snapshots",
        "case_kind": "quadrature",
        "config": cfg.to_dict(),
        "seed": args.seed,
        "dims": {"N": space.N, "M": space.M, "M_J": space.M, "K": snaps.K, "N_r": cfg.N_r},
        "files": entries,
    }
    write_json(out / MANIFEST, manifest)
    # timings live outside the manifest so reruns reproduce it byte for byte
    write_json(out / "gen_timing.json", {"gen_snapshots_ms": elapsed})
    print(f"wrote {snaps.K} snapshots (N={space.N}, M={space.M}, N_r={cfg.N_r}) to {out}")
    return 0


def cmd_assemble(args):
    manifest, cfg, basis, ds = _load_run(args.out)
    t0 = time.perf_counter()
    A = assemble_dense_A(ds, mem_budget=args.mem_budget).A
    elapsed = _ms(t0)
    out = Path(args.out)
    write_hrmx(out / "A.hrmx", A)
    manifest["files"]["A"] = {"path": "A.hrmx", "shape": list(A.shape)}
    write_json(out / MANIFEST, manifest)
    print(f"dense A {A.shape[0]} x {A.shape[1]} ({8 * A.size} bytes) in {elapsed:.0f} ms")
    return 0


def cmd_compress(args):
    manifest, cfg, basis, ds = _load_run(args.out)
    t0 = time.perf_counter()
    cds = _compress_from_args(args, ds)
    K_thin = cds.K_thin
    elapsed = _ms(t0)
    out = Path(args.out)
    write_hrmx(out / "A_thin.hrmx", cds.A_thin)
    write_hrmx(out / "compressed_singular_values.hrmx", cds.singular_values[None, :])
    manifest["files"]["A_thin"] = {"path": "A_thin.hrmx", "shape": list(cds.A_thin.shape)}
    manifest["files"]["compressed_singular_values"] = {
        "path": "compressed_singular_values.hrmx",
        "shape": [1, cds.singular_values.size],
    }
    manifest["compression"] = {
        "K_thin": K_thin,
        "kappa": cds.kappa,
        "compression_ratio": K_thin / ds.K,
    }
    write_json(out / MANIFEST, manifest)
    print(
        f"K_thin={K_thin} of K={ds.K} (ratio {K_thin / ds.K:.4f}), "
        f"kappa={cds.kappa:.3e}, {elapsed:.0f} ms"
    )
    return 0


def cmd_train(args):
    manifest, cfg, basis, ds = _load_run(args.out)
    out = Path(args.out)
    mcs = sorted(set(args.mc))
    timing = {"assembly": 0.0, "compression": 0.0, "training": 0.0}
    t_total = time.perf_counter()
    cds = None
    if args.mode == "standard":
        t0 = time.perf_counter()
        A = assemble_dense_A(ds, mem_budget=args.mem_budget, spare_rows=1)
        problem = build_ls_standard(A, ds)
        timing["assembly"] = _ms(t0)
        K_thin = None
        kappa = 0.0
    else:
        t0 = time.perf_counter()
        cds = _compress_from_args(args, ds)
        K_thin = cds.K_thin
        problem = build_ls_compressed(cds)
        timing["compression"] = _ms(t0)
        kappa = cds.kappa_effective
    t0 = time.perf_counter()
    full = omp_train(problem, mcs[-1], stop_tol=args.stop_tol, keep_iterates=True)
    timing["training"] = _ms(t0)
    timing["total"] = _ms(t_total)

    for M_c in mcs:
        rule = full.prefix(M_c) if M_c < len(full.indices) else full
        rule.M_c = M_c
        name = f"{args.mode}_mc{M_c}"
        save_rule(out / f"rule_{name}.json", rule, mode=args.mode, K_thin=K_thin)
        bounds = None if cds is None else bound_report(cds, rule).to_dict()
        run = {
            "schema_version": SCHEMA_VERSION,
            "kind": "training_run",
            "mode": args.mode,
            "case_kind": ds.kind.value,
            "seed": args.seed,
            "config": manifest["config"],
            "dims": {
                "M": ds.M,
                "M_J": ds.M_J,
                "K": ds.K,
                "N_r": ds.N_r,
                "K_thin": K_thin,
                "M_c": M_c,
            },
            "files": {
                "rule": {"path": f"rule_{name}.json"},
                "snapshots": {"path": MANIFEST},
            },
            "results": {
                "support": len(rule.indices),
                "stop_reason": rule.stop_reason,
                "n_equations": problem.n_equations,
                "kappa": kappa,
                "train_residual": rule.final_residual,
                "g_norm": rule.g_norm,
                # exact eta through the factored form, no dense matrix needed
                "eta": residual_factored(ds, rule),
            },
            "bounds": bounds,
            # one OMP run serves every M_c of the sweep, so timings are shared
            "timing_ms": timing,
        }
        write_json(out / f"run_{name}.json", run)
        print(
            f"{args.mode:10s} M_c={M_c:4d} support={len(rule.indices):4d} "
            f"eq={problem.n_equations:7d} eta={run['results']['eta']:.3e} "
            f"train {timing['training']:.0f} ms"
        )
    return 0


def cmd_bound(args):
    manifest, cfg, basis, ds = _load_run(args.out)
    rule = load_rule(args.rule)
    cds = _compress_from_args(args, ds)
    K_thin = cds.K_thin
    rep = bound_report(cds, rule).to_dict()
    rep["eta"] = residual_factored(ds, rule)
    rep["K_thin"] = K_thin
    path = Path(args.out) / f"bound_{Path(args.rule).stem}.json"
    write_json(path, rep)
    for k in ("eta", "eta_thin", "kappa", "aposteriori", "apriori"):
        print(f"{k:12s} {rep[k]:.6e}")
    return 0


def cmd_crom_eval(args):
    manifest, cfg, basis, ds = _load_run(args.out)
    out = Path(args.out)
    C = cfg.test if args.scenario is None else args.scenario
    p = cfg.problem(C)
    rule_paths = args.rule or sorted(out.glob("rule_*.json"))
    t0 = time.perf_counter()
    fom = bf.simulate_fom(p)
    fom_s = time.perf_counter() - t0
    mass = p.space.mass
    rows = [("fom", "", p.space.M, 0.0, fom_s)]
    rom = bf.run_rom(p, basis)
    rows.append(
        ("rom", "", p.space.M, bf.spacetime_l2_error(rom.lift(basis), fom, mass, fom.times), rom.runtime)
    )
    for path in rule_paths:
        rule = load_rule(path)
        data = read_json(path)
        mode = data.get("meta", {}).get("mode", "")
        try:
            traj = bf.run_crom(p, basis, rule)
        except NewtonDiverged as exc:
            raise NewtonDiverged(exc.step, exc.residual, f"{path}: {exc}") from None
        err = bf.spacetime_l2_error(traj.lift(basis), fom, mass, fom.times)
        rows.append((Path(path).stem, mode, len(rule.indices), err, traj.runtime))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rule", "mode", "M_c", "rel_error", "runtime_s"])
    for name, mode, mc, err, rt in rows:
        w.writerow([name, mode, mc, repr(float(err)), repr(float(rt))])
    atomic_write_bytes(out / f"crom_eval_C{C:g}.csv", buf.getvalue().encode())
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_report(args):
    rows = [report_row(read_json(m)) for m in args.manifests]
    out = Path(args.out)
    write_report(rows, csv_path=out / "report.csv", json_path=out / "report.json")
    print(f"{len(rows)} row(s) -> {out / 'report.csv'}")
    return 0


# --------------------------------------------------------------------------- #
# parser
# --------------------------------------------------------------------------- #


def _add_rank(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--kthin", type=int, help="compression rank K_thin")
    g.add_argument("--rel-tol", type=float, help="choose K_thin by relative SVD tail (default 1e-6)")


def build_parser():
    ap = argparse.ArgumentParser(prog="hyperred", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--seed", type=int, default=0, help="recorded in manifests")
        return p

    p = common("gen-snapshots", "run the full-order model, write snapshots and POD basis")
    p.add_argument("--config", help="JSON config (defaults used when omitted)")
    p.set_defaults(func=cmd_gen_snapshots)

    p = common("assemble", "write the dense manifold matrix A.hrmx")
    p.add_argument("--mem-budget", type=int, default=DEFAULT_MEM_BUDGET, help="bytes")
    p.set_defaults(func=cmd_assemble)

    p = common("compress", "structured compression, writes A_thin.hrmx")
    _add_rank(p)
    p.set_defaults(func=cmd_compress)

    p = common("train", "train sparse rules by OMP")
    p.add_argument("--mode", choices=["standard", "compressed"], default="compressed")
    p.add_argument("--mc", type=int, nargs="+", required=True, help="budget(s) M_c")
    p.add_argument("--stop-tol", type=float, default=0.0)
    p.add_argument("--mem-budget", type=int, default=DEFAULT_MEM_BUDGET, help="bytes")
    _add_rank(p)
    p.set_defaults(func=cmd_train)

    p = common("bound", "a posteriori / a priori bounds for a rule")
    p.add_argument("--rule", required=True)
    _add_rank(p)
    p.set_defaults(func=cmd_bound)

    p = common("crom-eval", "CROM error against the FOM on the test scenario")
    p.add_argument("--rule", action="append", help="rule JSON (repeatable; default all)")
    p.add_argument("--scenario", type=float, help="scenario C (default: config test)")
    p.set_defaults(func=cmd_crom_eval)

    p = sub.add_parser("report", help="aggregate training-run manifests")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--out", required=True, help="directory for report.csv / report.json")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HyperredError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
