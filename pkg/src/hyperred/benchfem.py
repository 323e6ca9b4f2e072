"""1D nonlinear reaction-diffusion benchmark with P1 finite elements.

    d/dt rho = D rho'' + f(rho)        on (0, 1), t in (0, t_end]
    D rho'(1) = g(t; C),  rho'(0) = 0,  rho(0, x) = rho_0(x; C)

with the saturating reaction ``f(rho) = rho / (1 + rho/2)``. Space is
discretized by linear elements on a uniform mesh, the reaction term by a
per-cell Gauss rule (the truth quadrature), time by implicit Euler with a
full-step Newton solver. The reduced models are Galerkin projections on a POD
basis; the complexity-reduced model replaces the truth quadrature by a
trained sparse rule.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .errors import (
    DimensionMismatch,
    GridMismatch,
    InfiniteRelError,
    NewtonDiverged,
    PoleInput,
    RankDeficient,
)
from .kernels import _fix_svd_signs
from .manifold import build_quadrature_dataset

__all__ = [
    "initial_condition",
    "nonlinearity",
    "nonlinearity_derivative",
    "boundary_flux",
    "P1Space",
    "FomProblem",
    "Trajectory",
    "SnapshotSet",
    "RomBasis",
    "simulate_fom",
    "run_fom",
    "pod_basis",
    "ReducedModel",
    "run_rom",
    "run_crom",
    "spacetime_l2_error",
    "collect_snapshots",
    "quadrature_training_dataset",
]

# flux data evaluated at the right end point
G1_AT_END = 1.0
G2_AT_END = float(np.sin(1.0) + np.cos(6.0) * (0.3 - 1.0))


def initial_condition(xi, C):
    """Blend of a narrow and a wide Gaussian centred at 0.5."""
    if not 0.0 <= C <= 1.0:
        raise ValueError("C must lie in [0, 1]")
    xi = np.asarray(xi, dtype=float)
    r2 = (xi - 0.5) ** 2
    return (1.0 - C) * np.exp(-r2 / 0.1) + C * np.exp(-r2 / 0.5)


def _check_pole(rho):
    if np.any(1.0 + 0.5 * np.asarray(rho) == 0.0):
        raise PoleInput("f is singular at rho = -2")


def nonlinearity(rho):
    """``f(rho) = rho / (1 + 0.5 rho)``."""
    _check_pole(rho)
    rho = np.asarray(rho, dtype=float)
    return rho / (1.0 + 0.5 * rho)


def nonlinearity_derivative(rho):
    _check_pole(rho)
    rho = np.asarray(rho, dtype=float)
    return 1.0 / (1.0 + 0.5 * rho) ** 2


def boundary_flux(t, C):
    """Neumann datum at ``x = 1``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return (1.0 - C) * G1_AT_END * np.sin(6.0 * t) + C * G2_AT_END * (t - 0.2) * np.cos(
        4.0 * t
    )


class P1Space:
    """Uniform P1 space on (0, 1) with a per-cell Gauss-Legendre rule."""

    def __init__(self, n_cells, quad_order=2):
        if n_cells < 1:
            raise ValueError("n_cells must be positive")
        if quad_order < 1:
            raise ValueError("quad_order must be positive")
        self.n_cells = int(n_cells)
        self.quad_order = int(quad_order)
        self.nodes = np.linspace(0.0, 1.0, self.n_cells + 1)
        h = np.diff(self.nodes)
        xg, wg = np.polynomial.legendre.leggauss(self.quad_order)
        s = 0.5 * (1.0 + xg)
        self.cell_of_point = np.repeat(np.arange(self.n_cells), self.quad_order)
        local = np.tile(s, self.n_cells)
        self.points = self.nodes[self.cell_of_point] + h[self.cell_of_point] * local
        self.weights = 0.5 * h[self.cell_of_point] * np.tile(wg, self.n_cells)
        self._left = 1.0 - local
        self._right = local
        self._dleft = -1.0 / h[self.cell_of_point]
        self._dright = 1.0 / h[self.cell_of_point]

    @property
    def N(self):
        return self.n_cells + 1

    @property
    def M(self):
        return self.points.size

    @cached_property
    def Phi(self):
        """Basis values at the quadrature points, ``(M, N)`` CSR."""
        return self._point_matrix(self._left, self._right)

    @cached_property
    def dPhi(self):
        return self._point_matrix(self._dleft, self._dright)

    def _point_matrix(self, a, b):
        M = self.M
        rows = np.repeat(np.arange(M), 2)
        cols = np.stack([self.cell_of_point, self.cell_of_point + 1], axis=1).ravel()
        vals = np.stack([a, b], axis=1).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(M, self.N))

    def weighted_bands(self, c, derivative=False):
        """Tridiagonal ``Phi^T diag(weights * c) Phi`` in LAPACK band layout."""
        a, b = (self._dleft, self._dright) if derivative else (self._left, self._right)
        cw = self.weights * c
        left = self.cell_of_point
        N = self.N
        diag = np.bincount(left, cw * a * a, minlength=N) + np.bincount(
            left + 1, cw * b * b, minlength=N
        )
        off = np.bincount(left, cw * a * b, minlength=N - 1)
        bands = np.zeros((3, N))
        bands[0, 1:] = off
        bands[1] = diag
        bands[2, :-1] = off
        return bands

    @cached_property
    def mass_bands(self):
        return self.weighted_bands(np.ones(self.M))

    @cached_property
    def stiffness_bands(self):
        return self.weighted_bands(np.ones(self.M), derivative=True)

    @cached_property
    def mass(self):
        return _bands_to_sparse(self.mass_bands)

    @cached_property
    def stiffness(self):
        return _bands_to_sparse(self.stiffness_bands)

    def integrate(self, values_at_points):
        return float(self.weights @ values_at_points)


def _bands_to_sparse(bands):
    N = bands.shape[1]
    return sp.diags([bands[2, :-1], bands[1], bands[0, 1:]], [-1, 0, 1], shape=(N, N)).tocsr()


def _band_matvec(bands, x):
    y = bands[1] * x
    y[:-1] += bands[0, 1:] * x[1:]
    y[1:] += bands[2, :-1] * x[:-1]
    return y


@dataclass
class FomProblem:
    """Full-order model configuration.

    ``with_reaction``, ``with_flux`` and ``rho0`` exist for verification runs
    (pure diffusion, constant states); the benchmark uses the defaults.
    """

    n_cells: int = 2000
    diffusion: float = 1.0
    dt: float = 0.002
    t_end: float = 1.5
    C: float = 0.5
    quad_order: int = 2
    newton_tol: float = 1e-10
    newton_maxit: int = 25
    with_reaction: bool = True
    with_flux: bool = True
    rho0: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.C <= 1.0:
            raise ValueError("C must lie in [0, 1]")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.diffusion <= 0:
            raise ValueError("diffusion must be positive")

    @cached_property
    def space(self):
        return P1Space(self.n_cells, self.quad_order)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def initial_state(self):
        if self.rho0 is not None:
            rho0 = np.asarray(self.rho0, dtype=float)
            if rho0.shape != (self.space.N,):
                raise DimensionMismatch("rho0 must have one value per node")
            return rho0.copy()
        return initial_condition(self.space.nodes, self.C)

    def flux(self, t):
        return boundary_flux(t, self.C) if self.with_flux else 0.0

    def reaction(self, rho):
        if self.with_reaction:
            return nonlinearity(rho)
        return np.zeros_like(rho)

    def reaction_derivative(self, rho):
        if self.with_reaction:
            return nonlinearity_derivative(rho)
        return np.zeros_like(rho)

    # implicit Euler step: R(rho) = M (rho - rho_prev) / dt + D K rho - F(rho) - b(t)
    def step_residual(self, rho, rho_prev, t):
        V = self.space
        r = _band_matvec(V.mass_bands, rho - rho_prev) / self.dt
        r += self.diffusion * _band_matvec(V.stiffness_bands, rho)
        r -= V.Phi.T @ (V.weights * self.reaction(V.Phi @ rho))
        r[-1] -= self.flux(t)
        return r

    def step_jacobian_bands(self, rho):
        V = self.space
        J = V.mass_bands / self.dt + self.diffusion * V.stiffness_bands
        if self.with_reaction:
            J = J - V.weighted_bands(self.reaction_derivative(V.Phi @ rho))
        return J

    def step_jacobian(self, rho):
        return _bands_to_sparse(self.step_jacobian_bands(rho))


@dataclass
class Trajectory:
    """States at every time level, full-order or reduced coordinates."""

    times: np.ndarray
    states: np.ndarray
    newton_iterations: int = 0
    runtime: float = 0.0

    def lift(self, basis):
        V = basis.V if isinstance(basis, RomBasis) else basis
        return Trajectory(self.times, V @ self.states, self.newton_iterations, self.runtime)


def _newton_converged(res, scale, tol):
    return res <= tol * scale


def simulate_fom(p):
    """Integrate the full-order model; returns every time level."""
    t0 = time.perf_counter()
    rho = p.initial_state()
    times = p.times
    out = np.empty((rho.size, times.size))
    out[:, 0] = rho
    total_it = 0
    V = p.space
    for n in range(1, times.size):
        t = times[n]
        prev = rho
        rho = prev.copy()
        scale = max(np.linalg.norm(_band_matvec(V.mass_bands, prev)) / p.dt, abs(p.flux(t)), 1e-300)
        r = p.step_residual(rho, prev, t)
        res = np.linalg.norm(r)
        it = 0
        while True:
            delta = solve_banded((1, 1), p.step_jacobian_bands(rho), -r)
            rho = rho + delta
            it += 1
            r = p.step_residual(rho, prev, t)
            res = np.linalg.norm(r)
            if _newton_converged(res, scale, p.newton_tol):
                break
            if it >= p.newton_maxit or not np.isfinite(res):
                raise NewtonDiverged(n, res)
        total_it += it
        out[:, n] = rho
    return Trajectory(times, out, total_it, time.perf_counter() - t0)


@dataclass
class SnapshotSet:
    """State and nonlinearity snapshots, optionally over several scenarios.

    ``nonlinear`` holds ``f`` of each state at the truth quadrature points.
    """

    states: np.ndarray
    nonlinear: np.ndarray
    times: np.ndarray
    scenarios: np.ndarray
    trajectories: dict = field(default_factory=dict, repr=False)

    @property
    def K(self):
        return self.states.shape[1]

    @classmethod
    def concatenate(cls, sets):
        sets = list(sets)
        traj = {}
        for s in sets:
            traj.update(s.trajectories)
        return cls(
            np.hstack([s.states for s in sets]),
            np.hstack([s.nonlinear for s in sets]),
            np.concatenate([s.times for s in sets]),
            np.concatenate([s.scenarios for s in sets]),
            traj,
        )


def run_fom(p, snapshot_stride=2):
    """Run the full-order model and keep every ``snapshot_stride``-th step.

    The initial state is not a snapshot; steps ``stride, 2*stride, ...`` are.
    """
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be positive")
    traj = simulate_fom(p)
    idx = np.arange(snapshot_stride, traj.times.size, snapshot_stride)
    states = traj.states[:, idx]
    nonlinear = p.reaction(p.space.Phi @ states)
    return SnapshotSet(
        states=states,
        nonlinear=nonlinear,
        times=traj.times[idx],
        scenarios=np.full(idx.size, p.C),
        trajectories={p.C: traj},
    )


@dataclass(frozen=True)
class RomBasis:
    V: np.ndarray
    singular_values: np.ndarray

    @property
    def N_r(self):
        return self.V.shape[1]


def pod_basis(s, N_r, rank_rtol=10 * np.finfo(float).eps):
    """Leading ``N_r`` left singular vectors of the state snapshots.

    Singular values below ``rank_rtol * sigma_1`` count as zero.
    """
    X = s.states if isinstance(s, SnapshotSet) else np.asarray(s, dtype=float)
    U, sv, Vt = np.linalg.svd(X, full_matrices=False)
    rank = int(np.sum(sv > rank_rtol * sv[0])) if sv.size else 0
    if not 1 <= N_r <= rank:
        raise RankDeficient(f"N_r={N_r} exceeds the snapshot rank {rank}")
    U, _ = _fix_svd_signs(U[:, :N_r], Vt[:N_r])
    return RomBasis(U, sv)


class ReducedModel:
    """Galerkin projection of a :class:`FomProblem` onto ``V``.

    The reaction term is evaluated on the selected quadrature points with the
    given weights; with all points and the truth weights this is the plain
    projected nonlinearity.
    """

    def __init__(self, p, basis, points=None, weights=None):
        self.p = p
        V = basis.V if isinstance(basis, RomBasis) else np.asarray(basis, dtype=float)
        space = p.space
        self.V = V
        self.mass = V.T @ (space.mass @ V)
        self.stiffness = V.T @ (space.stiffness @ V)
        self.flux_vector = V[-1].copy()
        P = np.asarray(space.Phi @ V)
        if points is None:
            self.points = np.arange(space.M)
            self.weights = space.weights.copy()
        else:
            self.points = np.asarray(points, dtype=int)
            self.weights = np.asarray(weights, dtype=float)
        self.P = P[self.points]
        self._lhs_const = self.mass / p.dt + p.diffusion * self.stiffness

    def reaction(self, x):
        return self.P.T @ (self.weights * self.p.reaction(self.P @ x))

    def reaction_jacobian(self, x):
        c = self.weights * self.p.reaction_derivative(self.P @ x)
        return self.P.T @ (c[:, None] * self.P)

    def residual(self, x, x_prev, t):
        return (
            self.mass @ (x - x_prev) / self.p.dt
            + self.p.diffusion * (self.stiffness @ x)
            - self.reaction(x)
            - self.p.flux(t) * self.flux_vector
        )

    def simulate(self):
        p = self.p
        t0 = time.perf_counter()
        x = self.V.T @ p.initial_state()
        times = p.times
        out = np.empty((x.size, times.size))
        out[:, 0] = x
        total_it = 0
        for n in range(1, times.size):
            t = times[n]
            prev = x
            x = prev.copy()
            scale = max(np.linalg.norm(self.mass @ prev) / p.dt, abs(p.flux(t)), 1e-300)
            r = self.residual(x, prev, t)
            it = 0
            while True:
                J = self._lhs_const - self.reaction_jacobian(x)
                x = x + np.linalg.solve(J, -r)
                it += 1
                r = self.residual(x, prev, t)
                res = np.linalg.norm(r)
                if _newton_converged(res, scale, p.newton_tol):
                    break
                if it >= p.newton_maxit or not np.isfinite(res):
                    raise NewtonDiverged(n, res)
            total_it += it
            out[:, n] = x
        return Trajectory(times, out, total_it, time.perf_counter() - t0)


def run_rom(p, basis):
    """Reduced trajectory (reduced coordinates) with the full truth quadrature."""
    return ReducedModel(p, basis).simulate()


def run_crom(p, basis, rule):
    """Reduced trajectory with the reaction integrated by a sparse rule."""
    idx = np.asarray(rule.indices, dtype=int)
    return ReducedModel(p, basis, idx, rule.weights[idx]).simulate()


def spacetime_l2_error(a, b, mass, times):
    """Relative space-time L2 error of ``a`` against reference ``b``.

    Both are ``(N, n_times)`` arrays sampled on ``times``; every level after
    the first is weighted by its step length.
    """
    a = a.states if isinstance(a, Trajectory) else np.asarray(a, dtype=float)
    b = b.states if isinstance(b, Trajectory) else np.asarray(b, dtype=float)
    times = np.asarray(times, dtype=float)
    if a.shape != b.shape or times.size != a.shape[1]:
        raise GridMismatch(f"shapes {a.shape} / {b.shape} on {times.size} time levels")
    dts = np.diff(times)
    diff = (a - b)[:, 1:]
    ref = b[:, 1:]
    num = np.sum(dts * np.einsum("it,it->t", diff, mass @ diff))
    den = np.sum(dts * np.einsum("it,it->t", ref, mass @ ref))
    if den <= 0:
        raise InfiniteRelError("reference trajectory has zero norm")
    return float(np.sqrt(max(num, 0.0) / den))


def collect_snapshots(template, scenarios, stride=2):
    """Run the full-order model for each scenario ``C`` and stack snapshots."""
    sets = []
    for C in scenarios:
        p = FomProblem(**{**_fields_of(template), "C": float(C)})
        sets.append(run_fom(p, stride))
    return SnapshotSet.concatenate(sets)


def _fields_of(p):
    return {
        k: getattr(p, k)
        for k in (
            "n_cells",
            "diffusion",
            "dt",
            "t_end",
            "C",
            "quad_order",
            "newton_tol",
            "newton_maxit",
            "with_reaction",
            "with_flux",
        )
    }


def quadrature_training_dataset(p, basis, snapshots):
    """Empirical quadrature dataset: ``p^n`` = ROM test function ``n`` at the points."""
    P = np.asarray(p.space.Phi @ basis.V).T
    return build_quadrature_dataset(P, snapshots.nonlinear, p.space.weights)
