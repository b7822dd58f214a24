"""Entropy density, relative entropy, entropy variables and their inverse.

Compositions are arrays whose last axis runs over the species; leading axes
are broadcast, so a whole grid of nodes can be processed at once.  With
``L(M) = log(q(M)/p(M))`` the entropy density is

    h(u) = sum_i (u_i log u_i - u_i + 1) + int_0^M L(s) ds,

its gradient is ``log u_i + L(M)`` and its Hessian ``diag(1/u) + L'(M) 1 1^T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import logsumexp, xlogy

from .closures import ClosureTable
from .errors import DomainError, NumericalError

_XG10, _WG10 = leggauss(10)


def as_composition(u, allow_zero=False):
    """Validate ``u`` (last axis = species) against the open state simplex."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u[None]
    if not np.all(np.isfinite(u)):
        raise DomainError("composition has non-finite entries")
    if allow_zero:
        if np.any(u < 0):
            raise DomainError("negative volume fraction")
    elif np.any(u <= 0):
        raise DomainError("volume fractions must be strictly positive")
    M = u.sum(axis=-1)
    if np.any(M >= 1):
        raise DomainError("total mass M >= 1")
    return u, M


def _psi(r):
    """``r log r - r + 1`` with a series near ``r = 1`` to avoid cancellation."""
    r = np.asarray(r, dtype=float)
    e = r - 1.0
    out = xlogy(r, r) - r + 1.0
    small = np.abs(e) < 1e-3
    if np.any(small):
        es = e[small]
        # sum_{k>=2} (-1)^k e^k / (k (k-1))
        acc = np.zeros_like(es)
        term = es * es
        for k in range(2, 12):
            acc += term / (k * (k - 1))
            term = -term * es
        out[small] = acc
    return out


def entropy_density(u, table: ClosureTable, allow_zero=False):
    """``h(u)``; with ``allow_zero`` exact zeros use the ``0 log 0 = 0`` convention."""
    u, M = as_composition(u, allow_zero)
    return np.sum(xlogy(u, u) - u + 1.0, axis=-1) + table.entropy_integral(M)


def entropy_gradient(u, table: ClosureTable):
    """``dh/du_i = log u_i + L(M)``."""
    u, M = as_composition(u)
    return np.log(u) + table.log_q_over_p(M)[..., None]


def h1_star(u, u_D):
    """``u log(u/u_D) + u_D - u``, elementwise; ``u = 0`` gives ``u_D``."""
    u = np.asarray(u, dtype=float)
    u_D = np.asarray(u_D, dtype=float)
    return u_D * _psi(u / u_D)


def h2_star(M, M_D, table: ClosureTable):
    """``int_{M_D}^M (L(s) - L(M_D)) ds`` for arrays ``M`` and scalar ``M_D``.

    Short intervals (relative to the distance from 0 and 1) use a 10-point
    Gauss rule on the integrand itself, which keeps full relative accuracy as
    ``M -> M_D``; otherwise the difference of antiderivatives is used.
    """
    M = np.asarray(M, dtype=float)
    M_D = float(M_D)
    LD = float(table.log_q_over_p(M_D))
    dM = M - M_D
    near = np.abs(dM) <= 0.25 * np.minimum(np.minimum(M, M_D), 1.0 - np.maximum(M, M_D))
    out = np.empty_like(M)
    if np.any(near):
        d = dM[near]
        s = M_D + 0.5 * d[..., None] * (_XG10 + 1.0)
        out[near] = 0.5 * d * ((table.log_q_over_p(s) - LD) @ _WG10)
    far = ~near
    if np.any(far):
        Mf = M[far]
        out[far] = (table.entropy_integral(Mf) - table.entropy_integral(M_D)
                    - LD * (Mf - M_D))
    return np.maximum(out, 0.0)


def relative_entropy_split(u, u_D, table: ClosureTable, allow_zero=False):
    """Return ``(h1*, h2*)``: per-species parts and the total-mass part."""
    u, M = as_composition(u, allow_zero)
    u_D, M_D = as_composition(u_D)
    if u_D.ndim != 1:
        raise DomainError("reference composition must be a single vector")
    return h1_star(u, u_D), h2_star(M, M_D, table)


def relative_entropy_density(u, u_D, table: ClosureTable, allow_zero=False):
    """``h(u) - h(u_D) - h'(u_D).(u - u_D)``, evaluated through the split form."""
    h1, h2 = relative_entropy_split(u, u_D, table, allow_zero)
    return h1.sum(axis=-1) + h2


def entropy_vars(u, u_D, table: ClosureTable):
    """``w_i = log(u_i q(M)/p(M)) - log(u_Di q(M_D)/p(M_D))``."""
    u, M = as_composition(u)
    u_D, M_D = as_composition(u_D)
    dL = table.log_q_over_p(M) - table.log_q_over_p(M_D)
    return np.log(u / u_D) + np.asarray(dL)[..., None]


def entropy_hessian(u, table: ClosureTable):
    """``diag(1/u) + L'(M) 1 1^T`` with ``L' = D/J - 1/M``."""
    u, M = as_composition(u)
    Lp = np.asarray(table.dlog_q_over_p(M))
    n = u.shape[-1]
    return np.eye(n) / u[..., None] + Lp[..., None, None] * np.ones((n, n))


def invert_entropy_vars(w, u_D, table: ClosureTable, tol=1e-12, max_iter=200):
    """Recover ``u`` from entropy variables ``w`` relative to ``u_D``.

    The total mass solves ``log Phi(M) = log Phi(M_D) + logsumexp(w + log(u_D/M_D))``
    (``Phi = M q/p`` is strictly increasing) by Newton's method safeguarded by a
    bisection bracket; then ``u_i = u_Di exp(w_i + L(M_D) - L(M))``.
    """
    w = np.asarray(w, dtype=float)
    u_D, M_D = as_composition(u_D)
    if w.shape != u_D.shape:
        raise DomainError("w and u_D must have the same shape")
    if not np.all(np.isfinite(w)):
        raise DomainError("entropy variables must be finite")
    target = float(table.log_Phi(M_D)) + float(logsumexp(w + np.log(u_D / M_D)))

    lo, hi = table.delta_cap, 1.0 - table.delta_cap
    f_lo = float(table.log_Phi(lo)) - target
    f_hi = float(table.log_Phi(hi)) - target
    if f_lo > 0 or f_hi < 0:
        raise NumericalError("target Phi outside the representable mass range",
                             min(abs(f_lo), abs(f_hi)))
    M = float(min(max(M_D, lo), hi))
    res = math.inf
    for _ in range(max_iter):
        res = float(table.log_Phi(M)) - target
        if abs(res) <= tol:
            break
        if res > 0:
            hi = M
        else:
            lo = M
        slope = float(table.D_over_mpq(M))  # d log Phi / dM
        step = M - res / slope
        M = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            res = float(table.log_Phi(M)) - target
            break
    if abs(res) > tol:
        raise NumericalError("mass root solve did not converge", abs(res))
    return u_D * np.exp(w + float(table.log_q_over_p(M_D)) - float(table.log_q_over_p(M)))


@dataclass
class SplitBound:
    """Sampled ratio ``h2*(M|M_D) / Phi_L(M)^2`` and the bound constant."""

    M_D: float
    samples: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    constant: float


def mass_weight_integral(M, M_D, a, b, kappa):
    """``int_{M_D}^M s^((a-1)/2) (1-s)^(-(1+b+kappa)/2) ds`` by adaptive quadrature."""
    e1, e2 = 0.5 * (a - 1.0), 0.5 * (1.0 + b + kappa)
    val, _ = integrate.quad(lambda s: s**e1 * (1.0 - s) ** -e2, M_D, M,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def split_bound_constant(M_D, table: ClosureTable, samples=None, safety=1.5):
    """Estimate ``C`` in ``h2*(M|M_D) <= C Phi_L(M)^2`` from sampled ratios.

    ``Phi_L`` is the weighted mass integral of :func:`mass_weight_integral`; the
    returned constant is the sampled maximum times ``safety``.
    """
    if samples is None:
        samples = np.concatenate([np.linspace(1e-3, 0.99, 300),
                                  1.0 - np.geomspace(1e-2, 1e-3, 40)])
    samples = np.asarray(samples, dtype=float)
    samples = samples[np.abs(samples - M_D) > 1e-6]
    a, b, k = table.a, table.b, table.kappa
    h2 = h2_star(samples, M_D, table)
    phi = np.array([mass_weight_integral(m, M_D, a, b, k) for m in samples])
    ratios = h2 / phi**2
    mx = float(np.max(ratios))
    return SplitBound(float(M_D), samples, ratios, mx, safety * mx)
