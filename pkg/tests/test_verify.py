import math

import numpy as np
import pytest
from scipy import integrate

from biofilm_xdiff.closures import get_table
from biofilm_xdiff.grid import GridSpec
from biofilm_xdiff.verify import (
    check_dissipation_bound,
    closed_form_Q_a2_b2,
    dissipation_bound_terms,
    oracle_log_q,
    oracle_Q,
    proportionality_check,
    quadrature_oracle_q,
    run_suite,
    scalar_mass_solver,
)

from conftest import make_params


class TestOracles:
    @pytest.mark.parametrize("M", [0.01, 0.3, 0.7])
    def test_hypergeometric_Q_against_quadrature(self, params2, M):
        ref, _ = integrate.quad(lambda s: s * (1 - s) ** -2, 0, M, epsabs=0, epsrel=1e-13)
        assert float(oracle_Q(M, params2)) == pytest.approx(ref, rel=1e-12)

    def test_closed_form_Q(self, params1):
        M = np.linspace(0.1, 0.99, 50)
        assert np.allclose(closed_form_Q_a2_b2(M), oracle_Q(M, params1), rtol=1e-12, atol=0)

    def test_graded_quadrature_against_plain_quadrature(self, params2):
        # moderate M where a direct integral of the definition is harmless
        M = 0.4
        a, b, k = params2.a, params2.b, params2.kappa
        p = lambda s: math.exp(-((1 - s) ** -k))
        I, _ = integrate.quad(lambda s: s**a * (1 - s) ** -b / p(s) ** 2, 0, M,
                              epsabs=0, epsrel=1e-13)
        assert quadrature_oracle_q(M, params2) == pytest.approx(p(M) / M * I, rel=1e-11)

    def test_oracle_deep_near_saturation(self, params1):
        # log q keeps working where q itself overflows
        val = oracle_log_q(1 - 1e-6, params1)
        assert math.isfinite(val) and val > 1e5
        assert val == pytest.approx(float(get_table(params1).log_q(1 - 1e-6)), abs=1e-7)

    def test_oracle_domain(self, params1):
        with pytest.raises(ValueError):
            oracle_log_q(1.0, params1)


class TestDissipationBound:
    @pytest.mark.parametrize("which", ["params1", "params2"])
    def test_positive_minimum(self, which, request):
        rep = check_dissipation_bound(request.getfixturevalue(which))
        assert rep.passed and rep.worst > 0

    def test_limits(self, params1):
        # ratio -> kappa / 2 as M -> 1 and a (a + 2) / (4 (a + 1)) as M -> 0
        r, _, _ = dissipation_bound_terms(np.array([1e-6, 1 - 1e-6]), params1)
        assert r[0] == pytest.approx(2 * 4 / 12, rel=1e-3)
        assert r[1] == pytest.approx(0.5, rel=1e-3)


class TestScalarSolver:
    def test_constant_state(self, params1):
        g = GridSpec(9, 9)
        M = scalar_mass_solver(np.full(g.shape, 0.3), g, params1, 0.01, 1e-4)
        assert np.all(M == 0.3)

    def test_mass_conservation(self, params2):
        g = GridSpec(33, 1)
        M0 = 0.3 + 0.2 * np.cos(np.pi * g.x)
        M = scalar_mass_solver(M0, g, params2, 0.01, 1e-5)
        assert np.sum(M * g.weights) == pytest.approx(np.sum(M0 * g.weights), abs=1e-14)

    def test_proportionality_default_fractions(self, params1):
        rep = proportionality_check(params1, nx=32, steps=100)
        assert rep.passed and rep.details["max_M"] < 1


class TestSuite:
    def test_quick_suite_passes(self):
        reports = run_suite(quick=True)
        failed = [r.format() for r in reports if not r.passed]
        assert not failed
        assert all(r.format().startswith("[PASS]") for r in reports)
