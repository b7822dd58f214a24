"""Reaction terms and sampled checks of the structural assumptions on them.

Two families of assumptions are checked.  The entropy family splits
``r = r_D + r_tilde`` and bounds the dissipative pairing of ``r_D`` with the
entropy variables together with the growth of both parts as ``M -> 1``.  The
uniqueness family asks for the form ``r_i = r0_i(M) + r1(M) u_i`` with a summed
rate ``R(M) + C_R M`` whose mass-only part vanishes fast enough at ``M = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .closures import ClosureTable, ModelParams, get_table
from .entropy import entropy_vars, relative_entropy_density
from .errors import DomainError

KINDS = ("relaxation", "none", "custom-split")


@dataclass(frozen=True)
class ReactionSpec:
    """Reaction definition plus the constants its assumptions are checked with.

    For ``custom-split`` the rate is ``r_i = r0(M)[i] + r1(M) u_i``; the optional
    ``remainder`` callable gives the non-dissipative part ``r_tilde(u)``
    (everything else counts as dissipative).
    """

    kind: str = "none"
    u_D: tuple = ()
    r0: Optional[Callable] = None
    r1: Optional[Callable] = None
    remainder: Optional[Callable] = None
    lambda_r: float = 0.0
    C_r: float = 0.0
    C_r_prime: float = 0.0
    mu: float = 0.0
    s: float = 1.0
    eta: float = 0.0
    eps0: float = 1.0
    C_R: float = 0.0
    C_R_prime: Optional[float] = None
    C_neumann: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown reaction kind {self.kind!r}")
        object.__setattr__(self, "u_D", tuple(float(x) for x in self.u_D))
        if self.kind == "relaxation" and not self.u_D:
            raise DomainError("relaxation needs the reference composition u_D")
        if self.kind == "custom-split" and (self.r0 is None or self.r1 is None):
            raise DomainError("custom-split needs r0 and r1")

    @classmethod
    def relaxation(cls, u_D):
        """``r_i = u_Di - u_i`` with the constants under which it is admissible."""
        return cls("relaxation", tuple(u_D), C_r_prime=1.0, eps0=1.0, C_R=-1.0)

    @classmethod
    def none(cls):
        return cls("none")

    # split used by the uniqueness assumptions
    def split_r0(self, M, n):
        M = np.asarray(M, dtype=float)
        if self.kind == "relaxation":
            return np.broadcast_to(np.asarray(self.u_D), M.shape + (n,))
        if self.kind == "none":
            return np.zeros(M.shape + (n,))
        return np.asarray(self.r0(M), dtype=float)

    def split_r1(self, M):
        M = np.asarray(M, dtype=float)
        if self.kind == "relaxation":
            return -np.ones_like(M)
        if self.kind == "none":
            return np.zeros_like(M)
        return np.broadcast_to(np.asarray(self.r1(M), dtype=float), M.shape)


def eval_reaction(u, spec: ReactionSpec, axis: int = -1):
    """Reaction rates at ``u`` (species along ``axis``)."""
    u = np.asarray(u, dtype=float)
    M = u.sum(axis=axis)
    if np.any(M >= 1):
        raise DomainError("total mass M >= 1")
    if spec.kind == "none":
        return np.zeros_like(u)
    if spec.kind == "relaxation":
        uD = np.asarray(spec.u_D)
        if uD.size != u.shape[axis]:
            raise DomainError("u_D has the wrong number of species")
        shape = [1] * u.ndim
        shape[axis] = -1
        return uD.reshape(shape) - u
    ul = np.moveaxis(u, axis, -1)
    r = spec.split_r0(M, ul.shape[-1]) + spec.split_r1(M)[..., None] * ul
    return np.moveaxis(r, -1, axis)


def _remainder(u, spec):
    if spec.remainder is None:
        return np.zeros_like(u)
    return np.asarray(spec.remainder(u), dtype=float)


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    worst: float
    worst_sample: np.ndarray
    detail: str = ""


@dataclass
class ReactionReport:
    kind: str
    n_samples: int
    checks: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self) -> str:
        lines = [f"reaction kind: {self.kind}   samples: {self.n_samples}"]
        for c in self.checks:
            tag = "PASSED" if c.passed else "FAILED"
            sample = np.array2string(np.asarray(c.worst_sample), precision=6)
            lines.append(f"  {c.name:<18s} {tag:<7s} worst={c.worst:.6e} at {sample}  {c.detail}")
        return "\n".join(lines)


def sample_compositions(n, count, rng, near_one_fraction=0.1, M_min=1e-6):
    """Random points of the state simplex; a fraction has ``M`` in ``(1-1e-2, 1)``."""
    k_hi = int(round(near_one_fraction * count))
    M = np.concatenate([
        rng.uniform(M_min, 1.0 - 1e-2, count - k_hi),
        1.0 - 10.0 ** rng.uniform(-6.0, -2.0, k_hi),
    ])
    frac = rng.dirichlet(np.ones(n), count)
    frac = np.maximum(frac, 1e-12)
    frac /= frac.sum(axis=1, keepdims=True)
    return frac * M[:, None]


def validate_assumptions(spec: ReactionSpec, params: ModelParams, sample_count: int = 100_000,
                         seed: int = 0, table: ClosureTable | None = None) -> ReactionReport:
    """Check every reaction assumption on random samples; report, never raise."""
    table = table or get_table(params)
    n = params.n
    rng = np.random.default_rng(seed)
    u = sample_compositions(n, sample_count, rng)
    M = u.sum(axis=1)
    one = 1.0 - M
    r = eval_reaction(u, spec)
    rt = _remainder(u, spec)
    rD = r - rt
    report = ReactionReport(spec.kind, sample_count)
    add = report.checks.append

    def worst_of(values):
        k = int(np.argmax(values))
        return float(values[k]), u[k]

    # entropy-compatibility of the dissipative part
    if spec.kind == "none" and not spec.u_D:
        uD = np.full(n, 0.5 / n)
    else:
        uD = np.asarray(spec.u_D) if spec.u_D else np.full(n, 0.5 / n)
    w = entropy_vars(u, uD, table)
    pairing = np.sum(rD * w, axis=1)
    excess = pairing - spec.lambda_r * (1.0 + relative_entropy_density(u, uD, table))
    val, at = worst_of(excess)
    pmax = float(np.max(pairing))
    add(AssumptionCheck("entropy-pairing", val <= 1e-12, val, at,
                        f"max dissipative pairing {pmax:.3e} (lambda_r={spec.lambda_r})"))

    # non-dissipative part: |r_tilde_i| <= C_r u_i^s / (1-M)^mu, mu < b-1
    bound = spec.C_r * u**spec.s / one[:, None] ** spec.mu
    val, at = worst_of(np.max(np.abs(rt) - bound, axis=1))
    ok = val <= 1e-12 and 0 <= spec.mu < params.b - 1 and spec.s > 0
    add(AssumptionCheck("remainder-growth", ok, val, at, f"C_r={spec.C_r} mu={spec.mu} s={spec.s}"))

    # dissipative growth: |r_D_i| <= C_r' / (1-M)^eta, eta < b+kappa-1
    val, at = worst_of(np.max(np.abs(rD) * one[:, None] ** spec.eta, axis=1) - spec.C_r_prime)
    ok = val <= 1e-12 and 0 <= spec.eta < params.b + params.kappa - 1
    add(AssumptionCheck("dissipative-growth", ok, val, at, f"C_r'={spec.C_r_prime} eta={spec.eta}"))

    # affine-in-u form r_i = r0_i(M) + r1(M) u_i
    r0 = spec.split_r0(M, n)
    r1 = spec.split_r1(M)
    val, at = worst_of(np.max(np.abs(r - (r0 + r1[:, None] * u)), axis=1))
    add(AssumptionCheck("affine-split", val <= 1e-12, val, at, "residual of the split form"))

    val, at = worst_of(np.max(np.maximum(0.0, spec.eps0 * r1)[:, None] - r0, axis=1))
    add(AssumptionCheck("split-sign", val <= 1e-12, val, at, f"eps0={spec.eps0}"))

    # summed rate R(M) + C_R M
    def R_of(Mv):
        Mv = np.asarray(Mv, dtype=float)
        return spec.split_r0(Mv, n).sum(axis=-1) + (spec.split_r1(Mv) - spec.C_R) * Mv

    val, at = worst_of(np.abs(r.sum(axis=1) - (R_of(M) + spec.C_R * M)))
    add(AssumptionCheck("summed-rate", val <= 1e-12, val, at, f"C_R={spec.C_R}"))

    # |R|/M + |R'| <= C M^(a/2): needs R to vanish fast enough at M = 0
    Ms = np.geomspace(1e-8, 0.99, 400)
    dM = 1e-6 * Ms
    Rp = (R_of(Ms + dM) - R_of(Ms - dM)) / (2 * dM)
    ratio = (np.abs(R_of(Ms)) / Ms + np.abs(Rp)) / Ms ** (0.5 * params.a)
    k = int(np.argmax(ratio))
    decade = ratio[Ms <= 1e-7]
    growing = bool(decade.size >= 2 and decade[0] > 1.5 * decade[-1] and decade[0] > 1e-12)
    cap = spec.C_R_prime
    ok = np.all(np.isfinite(ratio)) and not growing and (cap is None or ratio[k] <= cap)
    add(AssumptionCheck("small-mass-rate", bool(ok), float(ratio[k]), np.array([Ms[k]]),
                        "ratio grows without bound as M -> 0" if growing else
                        f"sup of (|R|/M+|R'|)/M^(a/2) = {ratio[k]:.3e}"))

    # Neumann mass control: sum r <= C (1 - M)
    need = r.sum(axis=1) / one
    val, at = worst_of(need)
    C = spec.C_neumann
    ok = np.isfinite(val) and (C is None or val <= C + 1e-12)
    add(AssumptionCheck("neumann-mass", bool(ok), val, at,
                        f"smallest admissible C = {max(val, 0.0):.6e}"))
    return report
