import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biofilm_xdiff.closures import (
    ClosureTable,
    ModelParams,
    eval_log_p,
    eval_log_q,
    eval_p,
    eval_Phi,
    eval_q,
    eval_Q,
    eval_single_species_D,
    estimate_asymptotic_constants,
    get_table,
    mpq_direct,
    mpq_quad,
)
from biofilm_xdiff.errors import DomainError
from biofilm_xdiff.verify import closed_form_Q_a2_b2, oracle_log_q

from conftest import make_params


def mpq_closed_form_a2_b2_k1(M):
    """``M p q`` for a = b = 2, kappa = 1, where the defining integral is elementary."""
    M = np.asarray(M, dtype=float)
    return M - 0.5 + 0.5 * np.exp(2.0 - 2.0 / (1.0 - M))


class TestModelParams:
    def test_rejects_out_of_range_exponents(self):
        with pytest.raises(DomainError):
            ModelParams(0.5, 2, 1)
        with pytest.raises(DomainError):
            ModelParams(2, 1, 1)
        with pytest.raises(DomainError):
            ModelParams(2, 2, 0)

    def test_a_equal_one_warns(self):
        with pytest.warns(UserWarning):
            p = ModelParams(1, 2, 0.9)
        assert p.at_hypothesis_boundary

    def test_scalar_mobility_is_broadcast(self):
        p = ModelParams(2, 2, 1, n=3, alpha=2.0)
        assert p.alpha == (2.0, 2.0, 2.0)

    def test_mobility_count_must_match(self):
        with pytest.raises(DomainError):
            ModelParams(2, 2, 1, n=3, alpha=(1.0, 2.0))


class TestEvalP:
    def test_values(self, params1):
        assert eval_p(0.0, params1) == pytest.approx(math.exp(-1), rel=1e-15)
        assert eval_p(0.5, params1) == pytest.approx(math.exp(-2), rel=1e-15)

    def test_near_saturation_stays_positive_in_log_form(self, params1):
        assert eval_log_p(1 - 1e-3, params1) == pytest.approx(-1000.0, rel=1e-12)
        assert eval_p(0.9, params1) > eval_p(0.99, params1) > 0

    def test_strictly_decreasing(self, params1):
        M = np.linspace(0.0, 0.97, 500)
        assert np.all(np.diff(eval_p(M, params1)) < 0)

    def test_saturation_is_an_error(self, params1):
        with pytest.raises(DomainError):
            eval_p(1.0, params1)
        with pytest.raises(DomainError):
            eval_p(np.array([0.2, 1.3]), params1)


class TestEvalQ:
    def test_small_mass_limit(self, params1):
        # M^-a q(M) -> 1 / ((a + 1) p(0)) = e / 3
        assert eval_q(1e-3, params1) / 1e-3**2 == pytest.approx(math.e / 3, rel=1e-2)

    def test_degenerate_limit(self, params1):
        assert 0 < eval_q(1e-8, params1) < 1e-15

    def test_exact_value_at_one_half(self, params1):
        # the elementary antiderivative gives q(1/2) = 1 exactly for a = b = 2, kappa = 1
        assert eval_q(0.5, params1) == pytest.approx(1.0, rel=1e-10)
        assert float(get_table(params1).q(0.5)) == pytest.approx(1.0, rel=1e-12)

    def test_matches_elementary_closed_form(self, params1):
        M = np.concatenate([np.linspace(0.1, 0.9, 30), 1 - np.geomspace(0.1, 1e-6, 30)])
        J = get_table(params1).mpq(M)
        assert np.max(np.abs(J / mpq_closed_form_a2_b2_k1(M) - 1)) < 1e-10

    @pytest.mark.parametrize("which", ["test1", "test2"])
    def test_table_against_oracle_fixture(self, which, oracle_values):
        a, b, k = oracle_values[which]["params"]
        t = get_table(make_params(a, b, k, n=1))
        M = np.array(oracle_values["M"])
        ref = np.array(oracle_values[which]["log_q"])
        assert np.max(np.abs(t.log_q(M) - ref)) < 1e-9

    @pytest.mark.parametrize("M", [1e-3, 0.2, 0.7, 0.95, 0.999])
    def test_adaptive_quadrature_matches_table(self, params2, M):
        t = get_table(params2)
        assert eval_log_q(M, params2) == pytest.approx(float(t.log_q(M)), abs=1e-9)

    def test_fixed_rule_matches_adaptive(self, params1):
        for M in (0.01, 0.3, 0.8, 0.99):
            assert mpq_direct(M, 2, 2, 1)[0] == pytest.approx(mpq_quad(M, params1), rel=1e-11)

    def test_pq_asymptote_at_saturation(self, params1):
        # p q / (1-M)^(1+kappa-b) approaches a finite positive constant
        t = get_table(params1)
        eps = np.geomspace(1e-2, 1e-8, 7)
        r = t.pq(1 - eps) / eps ** (1 + 1 - 2)
        assert np.all(np.isfinite(r)) and np.all(r > 0)
        assert abs(r[-1] / r[-2] - 1) < 1e-3

    def test_zero_mass_rejected(self, params1):
        with pytest.raises(DomainError):
            eval_q(0.0, params1)


class TestPhiAndQ:
    def test_phi_examples(self, params1):
        assert eval_Phi(0.0, params1) == 0.0
        assert eval_Phi(0.6, params1) > eval_Phi(0.5, params1)
        assert eval_Phi(1 - 1e-4, params1) > 10 * eval_Phi(0.9, params1)

    def test_Q_examples(self, params1):
        assert eval_Q(0.0, params1) == 0.0
        assert eval_Q(0.5, params1) == pytest.approx(1.5 + 2 * math.log(0.5), abs=1e-10)
        assert eval_Q(0.5, params1) == pytest.approx(0.113706, abs=5e-7)
        assert eval_Q(0.9, params1) == pytest.approx(float(closed_form_Q_a2_b2(0.9)), rel=1e-10)

    @pytest.mark.parametrize("which", ["test1", "test2"])
    def test_table_Q_against_oracle_fixture(self, which, oracle_values):
        a, b, k = oracle_values[which]["params"]
        t = get_table(make_params(a, b, k, n=1))
        M = np.array(oracle_values["M"])
        ref = np.array(oracle_values[which]["Q"])
        assert np.max(np.abs(t.Q(M) / ref - 1)) < 1e-10

    @pytest.mark.parametrize("which", ["params1", "params2"])
    def test_monotone_on_sampled_grid(self, which, request):
        t = get_table(request.getfixturevalue(which))
        M = np.unique(np.concatenate([np.linspace(1e-6, 0.99, 2000),
                                      1 - np.geomspace(1e-2, 1e-6, 200)]))
        assert np.all(np.diff(t.log_Phi(M)) > 0)
        assert np.all(np.diff(t.Q(M)) > 0)
        assert np.all(np.diff(t.p(M[M < 0.97])) < 0)

    @pytest.mark.parametrize("which", ["params1", "params2"])
    def test_Q_derivative_is_single_species_diffusivity(self, which, request):
        params = request.getfixturevalue(which)
        t = get_table(params)
        M = np.random.default_rng(1).uniform(1e-3, 1 - 1e-3, 1000)
        h = 1e-5 * np.minimum(M, 1 - M)
        fd = (t.Q(M + h) - t.Q(M - h)) / (2 * h)
        assert np.max(np.abs(fd / eval_single_species_D(M, params) - 1)) < 1e-6


class TestSingleSpeciesD:
    def test_values(self, params1):
        assert eval_single_species_D(0.0, params1) == 0.0
        assert eval_single_species_D(0.5, params1) == pytest.approx(1.0, rel=1e-15)
        assert eval_single_species_D(0.99, params1) > 50 * eval_single_species_D(0.9, params1)


class TestClosureIdentity:
    @pytest.mark.parametrize("which", ["params1", "params2"])
    def test_product_rule_identity(self, which, request):
        # p^2 (M q / p)' = M^a (1-M)^-b, differentiated in log form
        params = request.getfixturevalue(which)
        t = get_table(params)
        M = np.random.default_rng(0).uniform(1e-3, 1 - 1e-3, 1000)
        h = 1e-6 * np.minimum(M, 1 - M)
        dlog = (t.log_Phi(M + h) - t.log_Phi(M - h)) / (2 * h)
        lhs = np.exp(t.log_Phi(M) + 2 * t.log_p(M)) * dlog
        assert np.max(np.abs(lhs / eval_single_species_D(M, params) - 1)) < 1e-5

    @pytest.mark.parametrize("which", ["params1", "params2"])
    def test_sqrt_q_over_p_growth(self, which, request):
        # f = sqrt(q/p) has 2 f'/f = L' >= a / M
        params = request.getfixturevalue(which)
        t = get_table(params)
        M = np.geomspace(1e-4, 1 - 1e-6, 3000)
        assert np.all(t.dlog_q_over_p(M) >= params.a / M * (1 - 1e-12))


class TestAsymptoticConstants:
    def test_estimates(self, params1):
        est = {e.name: e for e in estimate_asymptotic_constants(params1)}
        assert est["C3"].estimate == pytest.approx(math.e / 3, rel=1e-2)
        for name in ("C1", "C2", "C3"):
            assert est[name].converged
            assert 0 < est[name].estimate < math.inf


class TestClosureTable:
    def test_table_is_cached(self, params1):
        assert get_table(params1) is get_table(make_params(2, 2, 1, n=5))

    @pytest.mark.parametrize("abk", [(2, 2, 1), (1, 2, 0.9), (3, 1.5, 2), (1.5, 4, 0.5)])
    def test_interpolation_error(self, abk):
        t = get_table(make_params(*abk, n=1))
        assert t.interp_error < 1e-8

    def test_interpolation_against_adaptive_quadrature(self, params2):
        t = get_table(params2)
        for M in np.random.default_rng(3).uniform(0.01, 0.999, 10):
            assert math.log(mpq_quad(M, params2)) == pytest.approx(float(t.log_mpq(M)), abs=1e-8)

    def test_entropy_integral_against_quadrature(self, table1, params1):
        from scipy import integrate
        for M in (0.05, 0.4, 0.95):
            ref, _ = integrate.quad(lambda s: float(table1.log_q_over_p(s)), 0, M,
                                    epsabs=1e-13, epsrel=1e-13, limit=200)
            assert float(table1.entropy_integral(M)) == pytest.approx(ref, abs=1e-11)

    def test_capped_evaluation(self, table1):
        assert np.isfinite(table1.log_q(1 - 1e-14))
        assert float(table1.log_q(1 - 1e-14)) == float(table1.log_q(1 - 1e-12))

    def test_constructor_with_coarse_grid_still_accurate(self, params1):
        t = ClosureTable(params1, n_intervals=2048)
        assert t.interp_error < 1e-8

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
    def test_phi_order_preserving(self, m1, m2):
        t = get_table(make_params(2, 2, 1, n=1))
        if m1 == m2:
            return
        lo, hi = min(m1, m2), max(m1, m2)
        assert float(t.log_Phi(lo)) < float(t.log_Phi(hi))


class TestOracleIndependence:
    def test_graded_oracle_against_closed_form(self, params1):
        for M in (0.1, 0.5, 0.9, 0.999):
            J = float(mpq_closed_form_a2_b2_k1(M))
            ref = math.log(J / M) + (1 - M) ** -1
            assert oracle_log_q(M, params1) == pytest.approx(ref, abs=1e-11)

    def test_no_warning_outside_boundary(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ModelParams(2, 2, 1)
