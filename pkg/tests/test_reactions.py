import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biofilm_xdiff.closures import get_table
from biofilm_xdiff.entropy import entropy_gradient
from biofilm_xdiff.errors import DomainError
from biofilm_xdiff.reactions import (
    ReactionSpec,
    eval_reaction,
    sample_compositions,
    validate_assumptions,
)

from conftest import make_params

U_D = (0.1, 0.1, 0.1)


class TestEvalReaction:
    def test_relaxation_fixed_point(self):
        assert np.all(eval_reaction(np.array(U_D), ReactionSpec.relaxation(U_D)) == 0)

    def test_none_is_zero(self):
        u = np.array([[0.3, 0.2, 0.1], [0.05, 0.05, 0.05]])
        assert np.all(eval_reaction(u, ReactionSpec.none()) == 0)

    def test_relaxation_value(self):
        r = eval_reaction(np.array([0.2, 0.1, 0.1]), ReactionSpec.relaxation(U_D))
        assert np.allclose(r, [-0.1, 0.0, 0.0], rtol=0, atol=1e-17)

    def test_species_axis(self):
        u = np.full((3, 4, 5), 0.2)
        r = eval_reaction(u, ReactionSpec.relaxation(U_D), axis=0)
        assert r.shape == u.shape
        assert np.allclose(r, -0.1)

    def test_custom_split(self):
        spec = ReactionSpec("custom-split", r0=lambda M: np.stack([M, M], axis=-1),
                            r1=lambda M: -2.0 * np.ones_like(M))
        u = np.array([0.1, 0.3])
        assert np.allclose(eval_reaction(u, spec), [0.4 - 0.2, 0.4 - 0.6])

    def test_saturated_state_is_an_error(self):
        with pytest.raises(DomainError):
            eval_reaction(np.array([0.5, 0.5, 0.1]), ReactionSpec.relaxation(U_D))

    def test_bad_specs(self):
        with pytest.raises(DomainError):
            ReactionSpec("growth")
        with pytest.raises(DomainError):
            ReactionSpec("relaxation")
        with pytest.raises(DomainError):
            ReactionSpec("custom-split", r0=lambda M: M)


class TestSampling:
    def test_samples_in_simplex_and_near_saturation(self):
        u = sample_compositions(3, 1000, np.random.default_rng(0))
        M = u.sum(axis=1)
        assert np.all(u > 0) and np.all(M < 1)
        assert np.sum(M > 1 - 1e-2) == 100


@pytest.fixture(scope="module")
def relaxation_report():
    return validate_assumptions(ReactionSpec.relaxation(U_D), make_params(2, 2, 1),
                                sample_count=20000)


class TestValidateAssumptions:
    def test_relaxation_flags_small_mass_condition(self, relaxation_report):
        rep = relaxation_report
        assert not rep.check("small-mass-rate").passed
        assert "grows without bound" in rep.check("small-mass-rate").detail
        assert not rep.all_passed

    @pytest.mark.parametrize("name", ["entropy-pairing", "remainder-growth", "dissipative-growth", "affine-split",
                                      "split-sign", "summed-rate", "neumann-mass"])
    def test_relaxation_other_checks_pass(self, relaxation_report, name):
        assert relaxation_report.check(name).passed

    def test_relaxation_pairing_is_dissipative(self, relaxation_report):
        # with lambda_r = 0 the check is exactly "pairing <= 0 on every sample"
        assert relaxation_report.check("entropy-pairing").worst <= 1e-12

    def test_none_passes_everything(self):
        rep = validate_assumptions(ReactionSpec.none(), make_params(1, 2, 0.9), sample_count=5000)
        assert rep.all_passed
        assert all(c.worst <= 1e-12 for c in rep.checks if c.name != "neumann-mass")

    def test_report_lists_every_check(self, relaxation_report):
        text = relaxation_report.format()
        for c in relaxation_report.checks:
            assert c.name in text
        assert "FAILED" in text

    def test_unknown_check(self, relaxation_report):
        with pytest.raises(KeyError):
            relaxation_report.check("missing")

    def test_fast_enough(self):
        import time
        t0 = time.perf_counter()
        validate_assumptions(ReactionSpec.relaxation(U_D), make_params(2, 2, 1))
        assert time.perf_counter() - t0 < 10


class TestDissipativePairing:
    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(1e-4, 0.32), min_size=3, max_size=3))
    def test_relaxation_pairing_nonpositive(self, u):
        # convexity: (u_D - u) . (grad h(u) - grad h(u_D)) <= 0
        t = get_table(make_params(2, 2, 1))
        u = np.array(u)
        r = eval_reaction(u, ReactionSpec.relaxation(U_D))
        dg = entropy_gradient(u, t) - entropy_gradient(np.array(U_D), t)
        assert float(r @ dg) <= 1e-12
