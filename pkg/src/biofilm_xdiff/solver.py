"""Finite-volume discretisation of the cross-diffusion system and time stepping.

Each species obeys ``du_i/dt = alpha_i div(p(M)^2 grad(u_i q(M)/p(M))) + r_i``.
The potential ``phi_i = u_i q/p`` is formed at the nodes, fluxes
``K (phi_b - phi_a)/h`` live on the faces between neighbours, and the
divergence is taken over the nodal control volumes of :class:`GridSpec`.
Dirichlet nodes are held at ``u_D`` and excluded from the update.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .closures import ClosureTable, ModelParams
from .errors import DomainError, NumericalError, StepRejected
from .grid import X_FACES, Y_FACES, GridSpec, State, face_coefficient, node_closures
from .reactions import ReactionSpec, eval_reaction


@dataclass
class StepReport:
    dt_used: float
    max_M: float
    min_u: float
    newton_iterations: int = 0
    residual_norm: float = 0.0
    substeps: int = 1


@dataclass
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 30
    max_halvings: int = 5
    fd_rel_step: float = 1e-7


def _fields(state):
    return state.fields if isinstance(state, State) else np.asarray(state, dtype=float)


def check_state(fields, grid: GridSpec, delta_cap: float):
    """Raise :class:`StepRejected` at the first node that leaves the admissible set."""
    if not np.all(np.isfinite(fields)):
        idx = np.argwhere(~np.isfinite(fields))[0]
        raise StepRejected("non-finite value", tuple(int(i) for i in idx), float("nan"))
    if np.any(fields < 0):
        idx = np.unravel_index(np.argmin(fields), fields.shape)
        raise StepRejected("negative volume fraction",
                           tuple(int(i) for i in idx), float(fields[idx]))
    M = fields.sum(axis=0)
    if np.any(M > 1.0 - delta_cap):
        idx = np.unravel_index(np.argmax(M), M.shape)
        raise StepRejected("total mass reached saturation",
                           tuple(int(i) for i in idx), float(M[idx]))


def diffusion_rhs(state, grid: GridSpec, params: ModelParams, table: ClosureTable,
                  face_rule: str = "gradient"):
    """``alpha_i div(p^2 grad phi_i)`` at every node; zero at Dirichlet nodes."""
    u = _fields(state)
    n = u.shape[0]
    if u.shape[1:] != grid.shape or n != params.n:
        raise DomainError(f"fields of shape {u.shape} do not match the grid/params")
    M = u.sum(axis=0)
    if np.any(u < 0) or np.any(M >= 1):
        raise DomainError("state outside the admissible set")
    cl = node_closures(M, table)
    phi = u * cl.expL
    ly = grid.wy[:, None]          # face length of x-faces in each row
    lx = grid.wx[None, :]          # face length of y-faces in each column
    acc = np.zeros_like(u)
    a, b = X_FACES
    K = face_coefficient(cl, a, b, table, face_rule)
    F = K * (phi[(slice(None),) + b] - phi[(slice(None),) + a]) / grid.hx * ly
    acc[:, :, :-1] += F
    acc[:, :, 1:] -= F
    if grid.ny > 1:
        a, b = Y_FACES
        K = face_coefficient(cl, a, b, table, face_rule)
        F = K * (phi[(slice(None),) + b] - phi[(slice(None),) + a]) / grid.hy * lx
        acc[:, :-1, :] += F
        acc[:, 1:, :] -= F
    rhs = acc / grid.weights * np.asarray(params.alpha)[:, None, None]
    rhs[:, grid.dirichlet_mask] = 0.0
    return rhs


def total_rhs(fields, grid, params, table, reaction: ReactionSpec | None, face_rule="gradient"):
    rhs = diffusion_rhs(fields, grid, params, table, face_rule)
    if reaction is not None and reaction.kind != "none":
        r = eval_reaction(fields, reaction, axis=0)
        r[:, grid.dirichlet_mask] = 0.0
        rhs = rhs + r
    return rhs


def _apply_dirichlet(fields, grid):
    if grid.bc == "mixed":
        fields[:, grid.dirichlet_mask] = np.asarray(grid.u_D)[:, None]
    return fields


def _report(fields, dt, **kw):
    return StepReport(dt, float(fields.sum(axis=0).max()), float(fields.min()), **kw)


def step_explicit(state: State, grid: GridSpec, params: ModelParams, table: ClosureTable,
                  reaction: ReactionSpec | None, dt: float, face_rule: str = "gradient"):
    """Forward Euler step; raises :class:`StepRejected` if the result is inadmissible."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    u = state.fields
    new = u + dt * total_rhs(u, grid, params, table, reaction, face_rule)
    _apply_dirichlet(new, grid)
    check_state(new, grid, table.delta_cap)
    return State(new, state.t + dt, state.step + 1), _report(new, dt)


# ---------------------------------------------------------------------------
# Backward Euler
# ---------------------------------------------------------------------------

class _ColoredJacobian:
    """Sparsity pattern and colouring for finite-difference Jacobians.

    A node influences the residual only at itself and its four neighbours, so
    nodes with equal ``(i + 2 j) mod 5`` can be perturbed together.
    """

    def __init__(self, grid: GridSpec, n: int):
        ny, nx = grid.shape
        self.n, self.N = n, nx * ny
        jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
        color = ((ii + 2 * jj) % 5).ravel()
        self.colors = [np.flatnonzero(color == c) for c in range(5)]
        rows, cols = [], []
        for dj, di in ((0, 0), (0, 1), (0, -1), (1, 0), (-1, 0)):
            j2, i2 = jj + dj, ii + di
            ok = (j2 >= 0) & (j2 < ny) & (i2 >= 0) & (i2 < nx)
            rows.append((j2 * nx + i2)[ok])
            cols.append((jj * nx + ii)[ok])
        self.node_rows = np.concatenate(rows)
        self.node_cols = np.concatenate(cols)

    def assemble(self, residual, U, F0, rel_step):
        n, N = self.n, self.N
        data, r_idx, c_idx = [], [], []
        for s in range(n):
            for nodes in self.colors:
                if nodes.size == 0:
                    continue
                Up = U.copy()
                cols = s * N + nodes
                h = rel_step * np.maximum(np.abs(U[cols]), 1e-3)
                Up[cols] += h
                dF = residual(Up)
                if dF is None:
                    Up[cols] -= 2 * h
                    dF = residual(Up)
                    h = -h
                dF = dF - F0
                step = np.zeros(N)
                step[nodes] = h
                sel = np.isin(self.node_cols, nodes)
                nr, nc = self.node_rows[sel], self.node_cols[sel]
                for t in range(n):
                    r_idx.append(t * N + nr)
                    c_idx.append(s * N + nc)
                    data.append(dF[t * N + nr] / step[nc])
        return sp.csr_matrix((np.concatenate(data), (np.concatenate(r_idx), np.concatenate(c_idx))),
                             shape=(n * N, n * N))


def _newton_solve(u_old, grid, params, table, reaction, dt, opts, face_rule, pattern):
    shape = u_old.shape
    dmask = np.broadcast_to(grid.dirichlet_mask, shape).ravel()
    uD = np.zeros(shape)
    _apply_dirichlet(uD, grid)
    uD = uD.ravel()
    old = u_old.ravel()

    def residual(U):
        f = U.reshape(shape)
        if np.any(f < 0) or np.any(f.sum(axis=0) > 1.0 - table.delta_cap):
            return None
        R = U - old - dt * total_rhs(f, grid, params, table, reaction, face_rule).ravel()
        R[dmask] = U[dmask] - uD[dmask]
        return R

    U = old.copy()
    U[dmask] = uD[dmask]
    F = residual(U)
    if F is None:
        raise NumericalError("initial Newton iterate is inadmissible", math.inf)
    norm = float(np.max(np.abs(F)))
    it = 0
    while norm > opts.tol:
        if it >= opts.max_iter:
            raise NumericalError("Newton iteration did not converge", norm)
        Jm = pattern.assemble(residual, U, F, opts.fd_rel_step)
        dU = -spsolve(Jm.tocsc(), F)
        lam = 1.0
        while True:
            Un = U + lam * dU
            Fn = residual(Un)
            if Fn is not None:
                nn = float(np.max(np.abs(Fn)))
                if nn <= (1.0 - 1e-4 * lam) * norm or nn <= opts.tol:
                    break
            lam *= 0.5
            if lam < 1e-8:
                raise NumericalError("line search failed", norm)
        U, F, norm = Un, Fn, nn
        it += 1
    return U.reshape(shape), it, norm


def step_implicit(state: State, grid: GridSpec, params: ModelParams, table: ClosureTable,
                  reaction: ReactionSpec | None, dt: float, newton_opts: NewtonOptions | None = None,
                  face_rule: str = "gradient"):
    """Backward Euler step by damped Newton with a coloured finite-difference Jacobian.

    If Newton fails the step is split into two halves, recursively, at most
    ``newton_opts.max_halvings`` times.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    opts = newton_opts or NewtonOptions()
    pattern = _ColoredJacobian(grid, params.n)

    def advance(u, h, depth):
        try:
            new, it, res = _newton_solve(u, grid, params, table, reaction, h, opts,
                                         face_rule, pattern)
            return new, it, res, 1
        except NumericalError as err:
            if depth >= opts.max_halvings:
                raise NumericalError(f"implicit step failed after {depth} halvings: {err}",
                                     err.residual) from err
            u1, it1, _, s1 = advance(u, 0.5 * h, depth + 1)
            u2, it2, res2, s2 = advance(u1, 0.5 * h, depth + 1)
            return u2, it1 + it2, res2, s1 + s2

    new, iters, res, nsub = advance(state.fields, dt, 0)
    check_state(new, grid, table.delta_cap)
    return (State(new, state.t + dt, state.step + 1),
            _report(new, dt, newton_iterations=iters, residual_norm=res, substeps=nsub))


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    rows: list
    state: State
    u_ref: np.ndarray
    reports: list


def run(config, on_sample=None, write_csv=True, keep_reports=False):
    """Integrate a configured problem to ``t_final`` and sample diagnostics.

    ``on_sample(t, state)`` is called at every sample.  On a step failure the
    rows gathered so far are written before the error propagates.
    """
    from .config import build_problem
    from .diagnostics import compute_row, write_csv as _write

    prob = build_problem(config)
    params, grid, table, reaction = prob.params, prob.grid, prob.table, prob.reaction
    state = prob.state
    check_state(state.fields, grid, table.delta_cap)
    u_ref = prob.u_ref
    n_steps = int(round(config.t_final / config.dt))
    if n_steps < 0 or abs(n_steps * config.dt - config.t_final) > 1e-9 * max(1.0, config.t_final):
        raise DomainError("t_final must be a nonnegative multiple of dt")
    rows, reports = [], []

    def sample(st):
        rows.append(compute_row(st, grid, params, table, u_ref))
        if on_sample is not None:
            on_sample(st.t, st)

    sample(state)
    try:
        for k in range(1, n_steps + 1):
            if config.scheme == "implicit":
                state, rep = step_implicit(state, grid, params, table, reaction, config.dt)
            else:
                state, rep = step_explicit(state, grid, params, table, reaction, config.dt)
            state.t = k * config.dt
            if keep_reports:
                reports.append(rep)
            if k % config.sample_every == 0 or k == n_steps:
                sample(state)
    finally:
        if write_csv and config.out:
            _write(config.out, rows)
    return RunResult(rows, state, u_ref, reports)
