"""Independent oracles and sampled checks of structural inequalities.

Nothing here reuses the quadrature or tabulation kernels of
:mod:`biofilm_xdiff.closures`: the q-integral is recomputed in the original
variable on graded panels, and Q comes from its hypergeometric closed form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import hyp2f1

from .closures import ModelParams, get_table
from .config import RunConfig, build_problem
from .entropy import entropy_vars, invert_entropy_vars, relative_entropy_density, relative_entropy_split
from .errors import BiofilmError
from .grid import GridSpec, State
from .solver import step_explicit


@dataclass
class OracleReport:
    name: str
    domain: str
    worst: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def format(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name:<28s} worst={self.worst:.3e} tol={self.tolerance:.1e}  ({self.domain})"


# ---------------------------------------------------------------------------
# q by graded composite Gauss-Legendre in the original variable
# ---------------------------------------------------------------------------

def oracle_log_q(M, params: ModelParams, panels: int = 20000, order: int = 16):
    """``log q(M)`` from ``M p(M) q(M) = int_0^M s^a (1-s)^-b (p(M)/p(s))^2 ds``.

    Half the panels are graded geometrically toward ``s = 0`` and half toward
    ``s = M``, where the weight ``(p(M)/p(s))^2`` changes on the scale
    ``(1-M)^(1+kappa)``.  Distances from ``M`` are carried explicitly so that
    ``1 - s`` and the exponent keep full relative accuracy.
    """
    a, b, k = params.a, params.b, params.kappa
    M = float(M)
    if not 0 < M < 1:
        raise ValueError("need 0 < M < 1")
    om = 1.0 - M
    half = panels // 2
    scale = om ** (1.0 + k) / k
    # distances below M (d = M - s)
    d_top = np.concatenate([[0.0], np.geomspace(min(1e-6 * scale, 1e-3 * M), 0.5 * M, half)])
    s_low = np.concatenate([[0.0], np.geomspace(1e-12 * M, 0.5 * M, half)])
    d_edges = np.unique(np.concatenate([d_top, M - s_low[::-1]]))
    d_edges = d_edges[(d_edges >= 0) & (d_edges <= M)]
    x, w = leggauss(order)
    lo, hi = d_edges[:-1, None], d_edges[1:, None]
    d = 0.5 * (hi - lo) * (x + 1.0) + lo
    wts = 0.5 * (hi - lo) * w
    s = M - d
    oms = om + d
    # (p(M)/p(s))^2 = exp(-2 (X(M) - X(s))), X(M) - X(s) = X(M) (1 - (1 + d/om)^-k)
    XM = om**-k
    gap = XM * -np.expm1(-k * np.log1p(d / om))
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(s > 0, s**a, 0.0) * oms**-b * np.exp(-2.0 * gap)
    integral = float(np.sum(f * wts))
    return math.log(integral) - math.log(M) + XM


def quadrature_oracle_q(M, params: ModelParams, panels: int = 20000, order: int = 16):
    """``q(M)`` by :func:`oracle_log_q` (overflows beyond ``(1-M)^-kappa ~ 700``)."""
    return math.exp(oracle_log_q(M, params, panels, order))


def oracle_Q(M, params: ModelParams):
    """``Q(M) = M^(a+1)/(a+1) 2F1(b, a+1; a+2; M)``."""
    a, b = params.a, params.b
    M = np.asarray(M, dtype=float)
    return M ** (a + 1.0) / (a + 1.0) * hyp2f1(b, a + 1.0, a + 2.0, M)


def closed_form_Q_a2_b2(M):
    """Antiderivative of ``s^2 (1-s)^-2`` vanishing at 0."""
    M = np.asarray(M, dtype=float)
    return 1.0 / (1.0 - M) - 1.0 + 2.0 * np.log1p(-M) + M


# ---------------------------------------------------------------------------
# Structural inequalities
# ---------------------------------------------------------------------------

def dissipation_bound_terms(M, params: ModelParams, fd_step=1e-6):
    """Return ``(ratio, f'/f analytic, f'/f finite difference)`` at the masses ``M``.

    With ``f = sqrt(q/p)``: ``p^2 f'(M f' + f) = p q (L'/2)(1 + M L'/2)``,
    ``L = log(q/p)``; the ratio divides it by ``M^(a-1) (1-M)^-(1+b+kappa)``.
    """
    t = get_table(params)
    a, b, k = params.a, params.b, params.kappa
    M = np.asarray(M, dtype=float)
    Lp = t.dlog_q_over_p(M)
    h = fd_step * np.minimum(M, 1.0 - M)
    Lp_fd = (t.log_q_over_p(M + h) - t.log_q_over_p(M - h)) / (2 * h)
    lhs = t.pq(M) * 0.5 * Lp * (1.0 + 0.5 * M * Lp)
    rhs = M ** (a - 1.0) * (1.0 - M) ** -(1.0 + b + k)
    return lhs / rhs, 0.5 * Lp, 0.5 * Lp_fd


def check_dissipation_bound(params: ModelParams, samples=None) -> OracleReport:
    """Positivity of the sampled dissipation ratio, ``2 f'/f >= a/M`` and tail stability."""
    if samples is None:
        samples = np.concatenate([np.geomspace(1e-3, 0.5, 200), 1.0 - np.geomspace(0.5, 1e-3, 200)[1:]])
    M = np.sort(np.asarray(samples, dtype=float))
    ratio, g, g_fd = dissipation_bound_terms(M, params)
    fd_err = float(np.max(np.abs(g_fd / g - 1.0)))
    mono_gap = float(np.min(2.0 * g - params.a / M))
    tail = ratio[M >= 1.0 - 1e-2]
    tail_var = float(np.ptp(tail) / np.min(tail)) if tail.size > 1 else 0.0
    rmin = float(np.min(ratio))
    passed = rmin > 0 and mono_gap >= 0 and fd_err < 1e-5 and tail_var < 0.2
    return OracleReport(
        f"dissipation bound {params.closure_key}", f"M in [{M[0]:g}, {M[-1]:g}]",
        rmin, 0.0, bool(passed),
        dict(min_ratio=rmin, ratio_at_ends=(float(ratio[0]), float(ratio[-1])),
             min_of_2fp_over_f_minus_a_over_M=mono_gap, fd_vs_analytic=fd_err,
             tail_relative_variation=tail_var, limit_M_to_1=params.kappa / 2))


# ---------------------------------------------------------------------------
# Scalar mass equation
# ---------------------------------------------------------------------------

def _scalar_rhs(M, grid: GridSpec, params, Msum_reaction=None):
    Q = oracle_Q(M, params)
    acc = np.zeros_like(M)
    F = (Q[:, 1:] - Q[:, :-1]) / grid.hx * grid.wy[:, None]
    acc[:, :-1] += F
    acc[:, 1:] -= F
    if grid.ny > 1:
        F = (Q[1:, :] - Q[:-1, :]) / grid.hy * grid.wx[None, :]
        acc[:-1, :] += F
        acc[1:, :] -= F
    out = acc / np.outer(grid.wy, grid.wx)
    if Msum_reaction is not None:
        out = out + Msum_reaction(M)
    return out


def scalar_mass_solver(M0, grid: GridSpec, params: ModelParams, t_final: float, dt: float,
                       reaction_sum=None):
    """Forward Euler for ``dM/dt = lap Q(M) + R(M)`` on the node-centred grid.

    Fluxes are Q-differences across faces; Dirichlet rows (mixed boundary
    conditions) are held at ``sum(u_D)``.
    """
    M = np.array(M0, dtype=float).reshape(grid.shape)
    mask = grid.dirichlet_mask
    steps = int(round(t_final / dt))
    for _ in range(steps):
        M = M + dt * _scalar_rhs(M, grid, params, reaction_sum)
        if grid.bc == "mixed":
            M[mask] = sum(grid.u_D)
        if np.any(M < 0) or np.any(M >= 1):
            raise BiofilmError("scalar solver left the admissible range")
    return M


def proportionality_check(params: ModelParams, nx=64, steps=1000, dt=None,
                          fractions=None, tol=1e-10) -> OracleReport:
    """Multi-species run with ``u_i = c_i M`` versus the scalar mass equation on a 1D grid."""
    n = params.n
    c = np.arange(1.0, n + 1.0) if fractions is None else np.asarray(fractions, dtype=float)
    c = c / c.sum()
    grid = GridSpec(nx, 1, "neumann")
    x = grid.x
    M0 = 0.3 + 0.2 * np.cos(np.pi * x) + 0.05 * np.cos(3 * np.pi * x)
    table = get_table(params)
    if dt is None:
        dt = 0.2 * grid.hx**2 / float(table.D(float(M0.max()) + 0.05))
    state = State(c[:, None, None] * M0[None, None, :])
    max_M = float(M0.max())
    for _ in range(steps):
        state, rep = step_explicit(state, grid, params, table, None, dt)
        max_M = max(max_M, rep.max_M)
    M_full = state.M
    M_ref = scalar_mass_solver(M0[None, :], grid, params, steps * dt, dt)
    diff = float(np.max(np.abs(M_full - M_ref)))
    prop = float(np.max(np.abs(state.fields - c[:, None, None] * M_full[None])))
    return OracleReport("proportional data vs scalar", f"{nx} nodes, {steps} steps, dt={dt:.3e}",
                        max(diff, prop), tol, bool(diff <= tol and prop <= tol),
                        dict(M_difference=diff, proportionality_defect=prop, dt=dt, max_M=max_M))


# ---------------------------------------------------------------------------
# Empirical uniqueness (dt-halving)
# ---------------------------------------------------------------------------

def _integrate(cfg: RunConfig, dt: float, perturb=0.0):
    prob = build_problem(replace(cfg, dt=dt))
    state = prob.state
    if perturb:
        free = ~prob.grid.dirichlet_mask
        state.fields[:, free] += perturb
    steps = int(round(cfg.t_final / dt))
    max_M = float(state.M.max())
    for _ in range(steps):
        state, rep = step_explicit(state, prob.grid, prob.params, prob.table, prob.reaction, dt)
        max_M = max(max_M, rep.max_M)
    return state.fields, max_M


def empirical_uniqueness_check(cfg: RunConfig | None = None, dts=(2e-4, 1e-4, 5e-5),
                               ratio_range=(1.5, 3.0)) -> OracleReport:
    """Successive dt-halving differences at ``t_final`` should shrink by about 2."""
    if cfg is None:
        cfg = RunConfig(test="1", nx=16, ny=16, t_final=0.1, out="")
    if len(set(cfg.alpha)) > 1:
        raise ValueError("the uniqueness setting needs equal mobilities")
    runs = [_integrate(cfg, dt) for dt in dts]
    sols = [r[0] for r in runs]
    max_M = max(r[1] for r in runs)
    diffs = [float(np.max(np.abs(s1 - s0))) for s0, s1 in zip(sols, sols[1:])]
    ratios = [d0 / d1 for d0, d1 in zip(diffs, diffs[1:])]
    repeat = _integrate(cfg, dts[0])[0]
    deterministic = bool(np.array_equal(repeat, sols[0]))
    pert = float(np.max(np.abs(_integrate(cfg, dts[0], 1e-10)[0] - sols[0])))
    lo, hi = ratio_range
    ok = all(lo <= r <= hi for r in ratios) and deterministic and pert <= 1e-6
    return OracleReport("dt-halving (uniqueness)", f"dt in {tuple(dts)}, t_final={cfg.t_final}",
                        min(ratios) if ratios else math.nan, lo, bool(ok),
                        dict(differences=diffs, ratios=ratios, deterministic=deterministic,
                             perturbation_response=pert, max_M=max_M))


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

def _q_agreement(params, Ms, tol=1e-9):
    t = get_table(params)
    errs = [abs(oracle_log_q(m, params) - float(t.log_q(m))) for m in Ms]
    k = int(np.argmax(errs))
    return OracleReport(f"q table vs oracle {params.closure_key}", f"{len(Ms)} log-spaced M",
                        errs[k], tol, errs[k] <= tol, dict(at_M=float(Ms[k])))


def _Q_agreement(params, tol=1e-10):
    """Table Q against the hypergeometric form and, for a = b = 2, the elementary one.

    The elementary antiderivative cancels badly for small M, so it is only
    used on [0.1, 0.99].
    """
    t = get_table(params)
    Ms = np.linspace(0.01, 0.99, 99)
    err = float(np.max(np.abs(t.Q(Ms) / oracle_Q(Ms, params) - 1.0)))
    if params.a == 2 and params.b == 2:
        Mc = Ms[Ms >= 0.1]
        err = max(err, float(np.max(np.abs(t.Q(Mc) / closed_form_Q_a2_b2(Mc) - 1.0))))
    return OracleReport(f"Q table vs closed form {params.closure_key}", "M in [0.01, 0.99]",
                        err, tol, err <= tol)


def _closure_identity(params, count=1000, seed=0, tol=1e-5):
    t = get_table(params)
    rng = np.random.default_rng(seed)
    M = rng.uniform(1e-3, 1 - 1e-3, count)
    h = 1e-6 * np.minimum(M, 1 - M)
    # p^2 (M q/p)' = (Phi)' p^2 with Phi from the table, differentiated in log form
    dlogPhi = (t.log_Phi(M + h) - t.log_Phi(M - h)) / (2 * h)
    lhs = np.exp(t.log_Phi(M) - 2 * t.X(M)) * dlogPhi
    D = M**params.a * (1 - M) ** -params.b
    err = float(np.max(np.abs(lhs / D - 1)))
    return OracleReport(f"closure identity {params.closure_key}", f"{count} random M",
                        err, tol, err <= tol)


def _entropy_algebra(params, count=500, seed=0):
    t = get_table(params)
    rng = np.random.default_rng(seed)
    n = params.n
    uD = np.full(n, 0.3 / n)
    worst_rt, worst_split = 0.0, 0.0
    for _ in range(count):
        u = rng.dirichlet(np.ones(n + 1))[:n] * 0.98 + 1e-4
        u2 = invert_entropy_vars(entropy_vars(u, uD, t), uD, t)
        worst_rt = max(worst_rt, float(np.max(np.abs(u2 - u))))
        h1, h2 = relative_entropy_split(u, uD, t)
        worst_split = max(worst_split, abs(h1.sum() + h2 - float(relative_entropy_density(u, uD, t))))
    return OracleReport(f"entropy round trip n={n}", f"{count} random u", worst_rt, 1e-9,
                        worst_rt <= 1e-9, dict(split_identity=worst_split))


def run_suite(quick: bool = True):
    """All oracle checks used by the ``verify`` command."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sets = [ModelParams(2, 2, 1, n=3), ModelParams(1, 2, 0.9, n=3)]
    Ms = np.geomspace(1e-3, 0.999, 50)
    reports = []
    for p in sets:
        reports.append(_q_agreement(p, Ms))
        reports.append(_Q_agreement(p))
        reports.append(_closure_identity(p))
        reports.append(check_dissipation_bound(p))
        reports.append(_entropy_algebra(p, 100 if quick else 500))
    reports.append(proportionality_check(sets[0], steps=200 if quick else 1000))
    if not quick:
        reports.append(empirical_uniqueness_check())
    return reports
