"""Entropy monitors along a trajectory, decay fits and CSV input/output."""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass

import numpy as np

from .closures import ClosureTable, ModelParams
from .entropy import relative_entropy_density
from .grid import X_FACES, Y_FACES, GridSpec, State, face_coefficient, node_closures

CSV_HEADER = ("t", "H_rel", "dissipation", "mass_mean", "min_u", "max_M")
MACHINE_FLOOR = 1e-15
FIT_FLOOR = 10 * MACHINE_FLOOR


@dataclass
class DiagnosticsRow:
    t: float
    H_rel: float
    dissipation: float
    mass_mean: float
    min_u: float
    max_M: float


def relative_entropy(fields_, grid: GridSpec, table: ClosureTable, u_ref):
    """Area-weighted sum of ``h*(u|u_ref)`` over the nodes."""
    u = np.moveaxis(np.asarray(fields_, dtype=float), 0, -1)
    h = relative_entropy_density(u, np.asarray(u_ref, dtype=float), table, allow_zero=True)
    return float(np.sum(grid.weights * h))


def dissipation(fields_, grid: GridSpec, params: ModelParams, table: ClosureTable,
                face_rule="gradient"):
    """``2 sum_i alpha_i int p^2 |grad sqrt(phi_i)|^2`` from face differences."""
    u = np.asarray(fields_, dtype=float)
    cl = node_closures(u.sum(axis=0), table)
    root = np.sqrt(u * cl.expL)
    alpha = np.asarray(params.alpha)[:, None, None]
    total = 0.0
    a, b = X_FACES
    K = face_coefficient(cl, a, b, table, face_rule)
    d = root[(slice(None),) + b] - root[(slice(None),) + a]
    total += np.sum(alpha * K * d**2 * grid.wy[:, None]) / grid.hx
    if grid.ny > 1:
        a, b = Y_FACES
        K = face_coefficient(cl, a, b, table, face_rule)
        d = root[(slice(None),) + b] - root[(slice(None),) + a]
        total += np.sum(alpha * K * d**2 * grid.wx[None, :]) / grid.hy
    return 2.0 * float(total)


def compute_row(state: State, grid: GridSpec, params: ModelParams, table: ClosureTable,
                u_ref) -> DiagnosticsRow:
    u = state.fields
    M = u.sum(axis=0)
    return DiagnosticsRow(
        t=float(state.t),
        H_rel=relative_entropy(u, grid, table, u_ref),
        dissipation=dissipation(u, grid, params, table),
        mass_mean=float(np.sum(grid.weights * M)),
        min_u=float(u.min()),
        max_M=float(M.max()),
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_csv(path, rows):
    """Write rows with ``repr`` floats (round-trip exact, '.' decimal point)."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in astuple(r)) + "\n")


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [DiagnosticsRow(*(float(v) for v in line)) for line in reader if line]


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    model: str
    n_rows: int
    n_used: int
    beta: float = math.nan
    log_H0: float = math.nan
    residual: float = math.nan
    constant: float = math.nan
    argmax_t: float = math.nan

    def format(self):
        out = [f"model: {self.model}", f"rows: {self.n_rows} (used {self.n_used})"]
        if self.model == "exponential":
            out += [f"beta: {self.beta!r}", f"log_H0: {self.log_H0!r}",
                    f"rms_residual: {self.residual!r}"]
        else:
            out += [f"constant: {self.constant!r}", f"attained_at_t: {self.argmax_t!r}"]
        return "\n".join(out)


def fit_decay(rows, model="exponential", min_rows=10) -> FitReport:
    """Fit ``H(t) <= C/(1+t)`` (algebraic) or ``log H = log H0 - beta t`` (exponential).

    The exponential fit ignores samples with ``H < FIT_FLOOR`` (1e-14).
    """
    if len(rows) < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {len(rows)}")
    t = np.array([r.t for r in rows])
    H = np.array([r.H_rel for r in rows])
    if model == "algebraic":
        g = H * (1.0 + t)
        k = int(np.argmax(g))
        return FitReport(model, len(rows), len(rows), constant=float(g[k]), argmax_t=float(t[k]))
    if model != "exponential":
        raise ValueError(f"unknown model {model!r}")
    keep = H >= FIT_FLOOR
    if keep.sum() < 2:
        raise ValueError("fewer than two samples above the machine floor")
    A = np.column_stack([np.ones(keep.sum()), -t[keep]])
    coef, *_ = np.linalg.lstsq(A, np.log(H[keep]), rcond=None)
    res = np.log(H[keep]) - A @ coef
    return FitReport(model, len(rows), int(keep.sum()), beta=float(coef[1]),
                     log_H0=float(coef[0]), residual=float(np.sqrt(np.mean(res**2))))


@dataclass
class InequalityReport:
    """Sampled check of ``dH/dt + dissipation <= C1 H + C2``."""

    C1: float
    C2: float
    residuals: np.ndarray
    satisfied: bool


def entropy_inequality_check(rows, C2=0.0) -> InequalityReport:
    """Smallest ``C1 >= 0`` (for the given ``C2``) making every sampled interval comply.

    ``dH/dt`` is the forward difference between samples and the dissipation
    is averaged over the interval.
    """
    t = np.array([r.t for r in rows])
    H = np.array([r.H_rel for r in rows])
    D = np.array([r.dissipation for r in rows])
    res = np.diff(H) / np.diff(t) + 0.5 * (D[1:] + D[:-1])
    Hm = 0.5 * (H[1:] + H[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(res - C2 > 0, (res - C2) / Hm, 0.0)
    C1 = float(max(0.0, np.max(need))) if need.size else 0.0
    return InequalityReport(C1, float(C2), res, bool(np.isfinite(C1)))

