"""Tests for the coefficient families and the hypothesis checker."""

import math

import numpy as np
import pytest

from frsde.fracop import SpaceConfig, assemble_integral_operator, assemble_spectral_operator
from frsde.model import (
    CheckReport,
    DriftF,
    DriftH,
    HypothesisProfile,
    NoiseModel,
    SampleGrid,
    certify_delta3,
    check_abstract,
    check_f,
    check_h,
    check_sigma,
    default_model,
    derive_profile,
    hs_norm_B,
)

from conftest import flat_harness

TOL = 1e-9


@pytest.fixture(scope="module")
def op():
    return assemble_spectral_operator(SpaceConfig(0.0, 1.0, N=31, s=0.5, p=4.0))


@pytest.fixture(scope="module")
def model():
    return default_model()


def by_condition(reports, name):
    hits = [r for r in reports if r.condition == name]
    assert len(hits) == 1
    return hits[0]


class TestDriftF:
    def test_power_decay_values(self):
        f = DriftF(family="PowerDecay", p=4.0, delta1=1.0, delta2=1.0)
        np.testing.assert_allclose(
            f.evaluate(0.0, None, np.array([-2.0, 0.0, 1.5])),
            [8.0, 0.0, -3.375],
        )

    def test_default_family_passes_all_conditions(self, model):
        f, _, _ = model
        reports = check_f(f)
        assert all(r.passed for r in reports)
        # the dissipativity and growth bounds are attained exactly when
        # delta1 = delta2 and the envelopes vanish
        assert abs(by_condition(reports, "f-dissipative").margin) <= TOL
        assert abs(by_condition(reports, "f-growth").margin) <= TOL

    def test_certified_uniqueness_weight(self):
        f = DriftF(family="PowerDecay", p=4.0, delta1=1.0, delta2=1.0)
        assert certify_delta3(f) == pytest.approx(0.5, abs=1e-6)

    def test_growth_mutant_fails_dissipativity(self):
        u = np.linspace(-1.0, 1.0, 201)
        f = DriftF(
            family="UserTabulated", p=4.0, delta1=1.0, delta2=2.0,
            u_table=tuple(u), f_table=tuple(u**3),
        )
        grid = SampleGrid(u_lo=-1.0, u_hi=1.0, n_u=201)
        report = by_condition(check_f(f, grid), "f-dissipative")
        assert not report.passed
        assert report.margin == pytest.approx(-2.0, abs=1e-9)
        assert report.witness is not None
        assert abs(report.witness["u"]) == pytest.approx(1.0, abs=1e-9)

    def test_negative_dissipation_mutant_fails(self):
        # flipping the sign of delta1 makes the drift increasing; the
        # dissipativity bound itself turns vacuous, so the failures show
        # up in monotonicity and the weighted one-sided condition
        f = DriftF(family="PowerDecay", p=4.0, delta1=-1.0, delta2=1.0)
        reports = check_f(f)
        mono = by_condition(reports, "f-monotone")
        onesided = by_condition(reports, "f-onesided-weighted")
        assert not mono.passed and mono.witness is not None
        assert not onesided.passed and onesided.witness is not None
        assert onesided.extras["delta3"] == 0.0

    def test_tabulated_drift_must_vanish_at_zero(self):
        with pytest.raises(ValueError):
            DriftF(family="UserTabulated", p=4.0, delta1=1.0, delta2=1.0,
                   u_table=(-1.0, 1.0), f_table=(0.5, 1.5))

    def test_rejects_bad_construction(self):
        with pytest.raises(ValueError):
            DriftF(family="Cubic", p=4.0, delta1=1.0, delta2=1.0)
        with pytest.raises(ValueError):
            DriftF(family="PowerDecay", p=2.0, delta1=1.0, delta2=1.0)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            SampleGrid(n_u=1)
        with pytest.raises(ValueError):
            SampleGrid(t_values=())


class TestDriftH:
    def test_bounded_sine_within_declared_slope(self, model):
        _, h, _ = model
        report = check_h(h)
        assert report.passed
        assert -TOL <= report.margin < 1e-3

    def test_steep_linear_gain_fails(self):
        h = DriftH(family="Linear", kappa=2.0, phi3=1.0)
        report = check_h(h)
        assert not report.passed
        assert report.margin == pytest.approx(-1.0, abs=1e-12)
        assert report.witness is not None

    def test_zero_perturbation_passes_any_envelope(self):
        report = check_h(DriftH(family="Linear", kappa=0.0, phi3=0.0))
        assert report.passed
        assert report.margin == pytest.approx(0.0, abs=1e-15)


class TestNoiseModel:
    def test_alpha_defaults_from_gamma(self):
        nm = NoiseModel(m=2, q=3.0, sigma1_coeffs=(0.1, 0.1),
                        beta=(0.0, 0.0), gamma=(0.4, 0.1))
        np.testing.assert_allclose(nm.alpha, (0.25 * 9 * 0.4, 0.25 * 9 * 0.1))

    def test_superlinear_shape(self):
        nm = NoiseModel(m=1, q=3.0, sigma1_coeffs=(0.0,), beta=(0.0,),
                        gamma=(1.0,))
        vals = nm.sigma2_at(np.array([-4.0, 0.0, 4.0]))[:, 0]
        np.testing.assert_allclose(vals, [-8.0, 0.0, 8.0])

    def test_rejects_sublinear_exponent(self):
        with pytest.raises(ValueError, match="2 <= q < p"):
            NoiseModel(m=1, q=1.5, sigma1_coeffs=(0.0,), beta=(0.0,),
                       gamma=(1.0,))

    def test_exponent_reaching_p_is_a_hard_failure(self, model):
        f, _, _ = model
        nm = NoiseModel(m=1, q=4.0, sigma1_coeffs=(0.0,), beta=(0.0,),
                        gamma=(1.0,))
        with pytest.raises(ValueError, match="2 <= q < p"):
            check_sigma(nm, f)

    def test_growth_margin_is_equality_without_offset(self, model):
        f, _, _ = model
        nm = NoiseModel(m=1, q=3.0, sigma1_coeffs=(0.0,), beta=(0.0,),
                        gamma=(0.3,))
        report = by_condition(check_sigma(nm, f), "sigma-growth")
        assert report.passed
        assert report.margin == pytest.approx(0.0, abs=TOL)

    def test_growth_margin_equals_smallest_offset(self, model):
        f, _, nm = model
        report = by_condition(check_sigma(nm, f), "sigma-growth")
        assert report.passed
        assert report.margin == pytest.approx(min(nm.beta), abs=TOL)

    def test_lipschitz_case_margin_zero_with_alpha_gamma(self, model):
        f, _, _ = model
        nm = NoiseModel(m=1, q=2.0, sigma1_coeffs=(0.0,), beta=(0.0,),
                        gamma=(0.4,), alpha=(0.4,))
        report = by_condition(check_sigma(nm, f), "sigma-increment-weighted")
        assert report.passed
        assert report.margin == pytest.approx(0.0, abs=TOL)

    def test_summability_bookkeeping(self, model):
        f, _, nm = model
        report = by_condition(check_sigma(nm, f), "sigma-summability")
        assert report.passed
        expected = sum(nm.beta) + sum(nm.gamma)
        assert report.extras["beta_gamma_partial_sum"] == pytest.approx(expected)
        assert report.extras["discarded_tail_bound"] > 0.0
        assert report.extras["sigma1_sq_partial_sum"] == pytest.approx(
            sum(a * a for a in nm.sigma1_coeffs))


class TestHilbertSchmidt:
    def test_zero_state_zero_deterministic_part(self, op):
        nm = NoiseModel(m=2, q=3.0, sigma1_coeffs=(0.0, 0.0),
                        beta=(0.0, 0.0), gamma=(0.5, 0.5))
        value, bound = hs_norm_B(nm, op, 0.0, np.zeros(op.dim))
        assert value == 0.0
        assert bound == 0.0

    @pytest.mark.parametrize("assemble", [assemble_spectral_operator,
                                          assemble_integral_operator])
    def test_three_sine_modes_analytic_value(self, assemble):
        operator = assemble(SpaceConfig(0.0, 1.0, N=63, s=0.5, p=4.0))
        nm = NoiseModel(m=3, q=3.0, sigma1_coeffs=(1.0, 0.5, 1.0 / 3.0),
                        beta=(0.0,) * 3, gamma=(0.0,) * 3)
        value, bound = hs_norm_B(nm, operator, 0.0, np.zeros(operator.dim))
        assert value == pytest.approx((1.0 + 0.25 + 1.0 / 9.0) / 2.0, abs=1e-9)
        assert value <= bound + TOL

    def test_constant_state_single_mode(self, unit_mode):
        nm = NoiseModel(m=1, q=2.0, sigma1_coeffs=(0.0,), beta=(0.0,),
                        gamma=(1.0,))
        for c in (0.3, -1.7):
            value, _ = hs_norm_B(nm, unit_mode, 0.0, np.array([c]))
            assert value == pytest.approx(c * c, rel=1e-12)

    def test_bound_holds_on_random_states(self, op, model):
        _, _, nm = model
        rng = np.random.default_rng(42)
        for _ in range(100):
            z = rng.standard_normal(op.dim) / np.arange(1, op.dim + 1)
            value, bound = hs_norm_B(nm, op, 0.0, z)
            assert value <= bound + TOL

    def test_dimension_mismatch(self, op, model):
        _, _, nm = model
        with pytest.raises(ValueError):
            hs_norm_B(nm, op, 0.0, np.zeros(op.dim - 1))


class TestHypothesisProfile:
    def test_derived_constants(self, op, model):
        f, h, nm = model
        prof = derive_profile(f, h, nm, op)
        assert prof.alpha2 == 1.0
        assert prof.alpha3 == 1.0
        gamma_sum = sum(nm.gamma)
        assert prof.alpha4 == pytest.approx(2.0 * gamma_sum)
        assert prof.beta_exp == 0.0
        assert prof.q_list == (2.0, 4.0, 2.0)
        assert prof.qhat_list == (1.0, 3.0, 1.0)
        assert prof.q_tilde == 4.0
        assert prof.q_under == 2.0

    def test_time_envelope_assembly(self, op, model):
        f, h, nm = model
        prof = derive_profile(f, h, nm, op)
        s1 = nm.sigma1_at(op, 0.0)
        s1_sq = float(np.sum(op.quad_w[:, None] * s1 * s1))
        a = 2.0 * sum(nm.gamma)
        young = a ** 4.0 * (3.0 / 4.0) ** 3.0 * 0.25
        expected = 2.0 * h.phi3 + 1.0 + 2.0 * s1_sq + 2.0 * sum(nm.beta) + young
        assert prof.g(0.0) == pytest.approx(expected, rel=1e-12)
        assert prof.g(0.0) == prof.g(17.3)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            HypothesisProfile(alpha2=0.0, alpha3=1.0, alpha4=1.0, beta_exp=0.0,
                              q_list=(2.0, 4.0, 2.0), qhat_list=(1.0, 3.0, 1.0),
                              g_constant=1.0)
        with pytest.raises(ValueError):
            HypothesisProfile(alpha2=1.0, alpha3=1.0, alpha4=1.0, beta_exp=0.0,
                              q_list=(2.0, 4.0, 2.0), qhat_list=(1.0, 4.0, 1.0),
                              g_constant=1.0)


class TestAbstractChecks:
    def test_default_model_passes_everything(self, op, model):
        f, h, nm = model
        prof = derive_profile(f, h, nm, op)
        grid = SampleGrid(n_states=120)
        reports = check_abstract(prof, f, h, nm, op, grid)
        assert [r.condition for r in reports] == [
            "coercivity", "drift-growth", "diffusion-growth"]
        for r in reports:
            assert r.passed, f"{r.condition} margin {r.margin}"
            assert r.margin >= -TOL

    def test_zero_state_reduces_to_envelope_bound(self, op, model):
        f, h, nm = model
        prof = derive_profile(f, h, nm, op)
        grid = SampleGrid(n_states=1, state_scale=0.0)
        reports = check_abstract(prof, f, h, nm, op, grid)
        assert all(r.passed for r in reports)
        value, _ = hs_norm_B(nm, op, 0.0, np.zeros(op.dim))
        assert value <= prof.g(0.0)

    def test_anticoercive_mutant_fails_with_witness(self, op, model):
        _, h, nm = model
        bad = DriftF(family="PowerDecay", p=4.0, delta1=-1.0, delta2=1.0)
        prof = derive_profile(bad, h, nm, op)
        reports = check_abstract(prof, bad, h, nm, op, SampleGrid(n_states=80))
        coercive = by_condition(reports, "coercivity")
        assert not coercive.passed
        assert coercive.margin < 0.0
        assert coercive.witness is not None
        assert "state_index" in coercive.witness

    def test_verdicts_stable_under_grid_refinement(self, op, model):
        f, h, nm = model
        prof = derive_profile(f, h, nm, op)
        coarse = check_abstract(prof, f, h, nm, op, SampleGrid(n_states=60))
        fine = check_abstract(prof, f, h, nm, op, SampleGrid(n_states=400))
        assert [r.passed for r in coarse] == [r.passed for r in fine]

    def test_report_serialization_shape(self, op, model):
        f, h, nm = model
        prof = derive_profile(f, h, nm, op)
        report = check_abstract(prof, f, h, nm, op, SampleGrid(n_states=10))[0]
        blob = report.to_json_dict()
        assert set(blob) >= {"condition", "pass", "margin", "witness", "samples"}
