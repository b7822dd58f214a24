"""Structured node-centred grids, solver state and the shared flux building blocks.

Nodes sit at ``x_k = k hx`` (``k = 0..nx-1``) and ``y_j = j hy`` on the unit
square; a single row (``ny = 1``) gives a 1D grid on [0, 1].  Each node owns a
control volume (half or quarter cells on the boundary), so sums weighted by
:attr:`GridSpec.weights` are trapezoidal integrals and zero-flux boundaries
conserve them exactly.  Fields are stored as arrays of shape ``(n, ny, nx)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .closures import ClosureTable
from .errors import DomainError

BC_KINDS = ("mixed", "neumann")

# below this jump in M the discrete-gradient face coefficient is replaced by
# its limit p^2 at the face midpoint (the quotient would lose digits)
_DG_SWITCH = 1e-6


def _trapezoid(m):
    if m == 1:
        return np.ones(1)
    w = np.full(m, 1.0 / (m - 1))
    w[[0, -1]] *= 0.5
    return w


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the unit square (or interval when ``ny = 1``).

    ``bc = "mixed"`` puts Dirichlet data ``u_D`` on the top row ``y = 1`` and
    zero flux elsewhere; ``bc = "neumann"`` is zero flux everywhere.
    """

    nx: int
    ny: int
    bc: str = "neumann"
    u_D: tuple = ()

    def __post_init__(self):
        if self.nx < 2 or self.ny < 1:
            raise DomainError("need nx >= 2 and ny >= 1")
        if self.bc not in BC_KINDS:
            raise DomainError(f"unknown boundary condition {self.bc!r}")
        object.__setattr__(self, "u_D", tuple(float(x) for x in self.u_D))
        if self.bc == "mixed":
            if self.ny < 2:
                raise DomainError("mixed boundary conditions need a 2D grid")
            if not self.u_D or min(self.u_D) <= 0 or sum(self.u_D) >= 1:
                raise DomainError("Dirichlet data must be positive with total mass < 1")

    @property
    def hx(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def hy(self) -> float:
        return 1.0 / (self.ny - 1) if self.ny > 1 else 1.0

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def x(self):
        return np.linspace(0.0, 1.0, self.nx)

    @property
    def y(self):
        return np.linspace(0.0, 1.0, self.ny) if self.ny > 1 else np.zeros(1)

    @property
    def wx(self):
        return _trapezoid(self.nx)

    @property
    def wy(self):
        return _trapezoid(self.ny)

    @property
    def weights(self):
        """Control-volume areas; they sum to 1."""
        return np.outer(self.wy, self.wx)

    @property
    def dirichlet_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        if self.bc == "mixed":
            mask[-1, :] = True
        return mask


@dataclass
class State:
    """Species fields of shape ``(n, ny, nx)`` at time ``t``."""

    fields: np.ndarray
    t: float = 0.0
    step: int = field(default=0)

    @property
    def M(self):
        return self.fields.sum(axis=0)

    def copy(self):
        return State(self.fields.copy(), self.t, self.step)


@dataclass
class NodeClosures:
    """Closure values at every node, computed once per right-hand side."""

    M: np.ndarray
    X: np.ndarray        # (1-M)^-kappa
    expL: np.ndarray     # q/p
    Phi: np.ndarray      # M q/p
    Q: np.ndarray


def node_closures(M, table: ClosureTable) -> NodeClosures:
    M = np.asarray(M, dtype=float)
    z = table.z(M)
    with np.errstate(divide="ignore"):
        lm = np.log(M)
        X = np.exp(table.kappa * z)
        G = table._G(z)
        L = G + table.a * lm + 2.0 * X
        expL = np.exp(L)
        Phi = np.exp(L + lm)
        Q = np.exp(table._R(z) + (table.a + 1.0) * lm)
    return NodeClosures(M, X, expL, Phi, Q)


def face_coefficient(cl: NodeClosures, sl_a, sl_b, table: ClosureTable, rule="gradient"):
    """Face value of ``p^2`` between the nodes selected by ``sl_a`` and ``sl_b``.

    ``rule="gradient"`` uses ``(Q_b - Q_a)/(Phi_b - Phi_a)``, a weighted
    harmonic mean of ``p^2`` over the face (so it lies between the two nodal
    values) for which ``p^2 dPhi = dQ`` holds exactly; ``rule="arithmetic"`` is
    the plain average of the nodal ``p^2``.
    """
    Xa, Xb = cl.X[sl_a], cl.X[sl_b]
    if rule == "arithmetic":
        return 0.5 * (np.exp(-2.0 * Xa) + np.exp(-2.0 * Xb))
    if rule != "gradient":
        raise DomainError(f"unknown face rule {rule!r}")
    Ma, Mb = cl.M[sl_a], cl.M[sl_b]
    dM = Mb - Ma
    mid = 0.5 * (Ma + Mb)
    out = np.exp(-2.0 * table.X(mid))
    big = np.abs(dM) > _DG_SWITCH
    if np.any(big):
        dQ = cl.Q[sl_b] - cl.Q[sl_a]
        dPhi = cl.Phi[sl_b] - cl.Phi[sl_a]
        out = np.where(big, dQ / np.where(big, dPhi, 1.0), out)
    return out


X_FACES = (np.s_[:, :-1], np.s_[:, 1:])
Y_FACES = (np.s_[:-1, :], np.s_[1:, :])
