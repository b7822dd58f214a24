"""1D lattice master equation and its diffusive limit.

Cells ``j = 0..J-1`` of width ``h`` exchange individuals with their
neighbours at rates ``T_i^{j+-} = alpha_i q(M_j) p(M_{j+-1})``; the flux
across the face ``j+1/2`` is therefore ``alpha_i p_j p_{j+1} (phi_i^j - phi_i^{j+1})``
with ``phi = u q/p``.  The ends are closed by mirrored ghost cells, so nothing
crosses them.  With ``alpha_i = alpha_i0 / h^2`` the lattice formally tends
to ``du_i/dt = alpha_i0 d/dx(sum_j A_ij du_j/dx)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .closures import ClosureTable, ModelParams, get_table
from .errors import DomainError
from .grid import GridSpec
from .reactions import ReactionSpec, eval_reaction
from .solver import diffusion_rhs


@dataclass
class LatticeState:
    """Cell values of shape ``(J, n)``, cell distance ``h`` and hopping rates."""

    cells: np.ndarray
    h: float
    alpha: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        self.alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (self.cells.shape[1],))
        if np.any(self.cells < 0) or np.any(self.cells.sum(axis=1) >= 1):
            raise DomainError("lattice state outside the admissible set")


def master_rhs(state: LatticeState, table: ClosureTable, reaction: ReactionSpec | None = None):
    """Time derivative of every cell value under the master equation."""
    u = state.cells
    if np.any(u < 0) or np.any(u.sum(axis=1) >= 1):
        raise DomainError("lattice state outside the admissible set")
    # mirrored ghost cells: the outer neighbour of an end cell is a copy of it
    ue = np.concatenate([u[:1], u, u[-1:]])
    Me = ue.sum(axis=1)
    pe = table.p(Me)
    with np.errstate(divide="ignore"):
        qe = np.where(Me > 0, table.q(Me), 0.0)
    Tp = qe[:-1] * pe[1:]      # T+ of extended cells 0..J
    Tm = qe[1:] * pe[:-1]      # T- of extended cells 1..J+1
    gain = Tp[:-1, None] * ue[:-2] + Tm[1:, None] * ue[2:]
    loss = (Tp[1:] + Tm[:-1])[:, None] * u
    rhs = state.alpha * (gain - loss)
    if reaction is not None and reaction.kind != "none":
        rhs = rhs + eval_reaction(u, reaction)
    return rhs


def rk4(f, y0, t_end, dt):
    """Classical fourth-order Runge-Kutta with the last step shortened to hit ``t_end``."""
    y = np.array(y0, dtype=float)
    t = 0.0
    while t < t_end - 1e-14 * max(1.0, t_end):
        h = min(dt, t_end - t)
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def limit_diffusion_matrix(u, table: ClosureTable, dM: float = 1e-6):
    """``A_ij = delta_ij p q + u_i (p q' - q p')`` with ``M``-derivatives by central differences."""
    u = np.asarray(u, dtype=float)
    M = float(u.sum())
    p, q = float(table.p(M)), float(table.q(M))
    dq = (float(table.q(M + dM)) - float(table.q(M - dM))) / (2 * dM)
    dp = (float(table.p(M + dM)) - float(table.p(M - dM))) / (2 * dM)
    n = u.size
    return np.eye(n) * p * q + np.outer(u, np.ones(n)) * (p * dq - q * dp)


@dataclass
class StudyRow:
    J: int
    h: float
    error: float
    order: float = float("nan")
    stable: bool = True


@dataclass
class LatticeStudy:
    rows: list = field(default_factory=list)
    reference_nodes: int = 0
    max_M: float = 0.0

    @property
    def monotone(self) -> bool:
        e = [r.error for r in self.rows]
        return all(b < a for a, b in zip(e, e[1:])) or all(x == 0 for x in e)

    @property
    def observed_order(self) -> float:
        return self.rows[-1].order if len(self.rows) > 1 else float("nan")

    def format(self) -> str:
        out = [f"{'J':>6s} {'h':>12s} {'max error':>14s} {'order':>8s}"]
        for r in self.rows:
            flag = "" if r.stable else "  UNSTABLE"
            out.append(f"{r.J:6d} {r.h:12.6e} {r.error:14.6e} {r.order:8.3f}{flag}")
        out.append(f"reference: node-centred continuum scheme with {self.reference_nodes} nodes")
        out.append(f"monotone decrease: {self.monotone}")
        return "\n".join(out)


def _stable_dt(profile_max_M, table, h, alpha0, safety):
    Mmax = min(profile_max_M, 0.999)
    rate = max(float(table.D(Mmax)), float(table.pq(Mmax)), 1e-12) * np.max(alpha0)
    return safety * h * h / rate


def diffusive_limit_study(profile, params: ModelParams, refinements=(16, 32, 64),
                          t_end=0.05, reference_factor=2, safety=0.4):
    """Compare the lattice with the continuum equation as the cells shrink.

    ``profile(x)`` returns an ``(len(x), n)`` array.  The lattice with ``J``
    cells on [0, 1] and ``alpha_i = alpha_i0 J^2`` is integrated by RK4; the
    reference is the node-centred finite-volume scheme on a grid of spacing
    ``1 / (2 J_max reference_factor)``, whose nodes include every cell centre.
    """
    table = get_table(params)
    alpha0 = np.asarray(params.alpha)
    Jmax = max(refinements)
    N = 2 * Jmax * reference_factor
    grid = GridSpec(N + 1, 1, "neumann")
    xr = grid.x
    u0 = np.asarray(profile(xr), dtype=float)
    Mmax = float(u0.sum(axis=1).max())
    dt = _stable_dt(Mmax, table, 1.0 / N, alpha0, safety)

    study = LatticeStudy(reference_nodes=N + 1)

    def f_ref(y):
        study.max_M = max(study.max_M, float(y.sum(axis=0).max()))
        return diffusion_rhs(y, grid, params, table)

    ref = rk4(f_ref, u0.T[:, None, :], t_end, dt)[:, 0, :].T
    prev = None
    for J in refinements:
        h = 1.0 / J
        xc = (np.arange(J) + 0.5) * h
        state = LatticeState(np.asarray(profile(xc), dtype=float), h, alpha0 / h**2)

        def f(y, h=h):
            study.max_M = max(study.max_M, float(y.sum(axis=1).max()))
            return master_rhs(LatticeState(y, h, alpha0 / h**2), table)

        try:
            uJ = rk4(f, state.cells, t_end, _stable_dt(Mmax, table, h, alpha0, safety))
            idx = np.rint(xc * N).astype(int)
            err = float(np.max(np.abs(uJ - ref[idx])))
            stable = bool(np.isfinite(err))
        except DomainError:
            err, stable = float("nan"), False
        row = StudyRow(J, h, err, stable=stable)
        if prev is not None and prev.error > 0 and err > 0:
            row.order = float(np.log2(prev.error / err) / np.log2(prev.h / h))
        study.rows.append(row)
        prev = row
    return study
