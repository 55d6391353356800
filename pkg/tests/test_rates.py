import math

import numpy as np
import pytest

from mvlab import (
    GaussianMeasure,
    combine_rates,
    fit_exp_rate,
    gaussian_w2,
    kappa,
    ou_granular_moments,
    theta_pair,
    twist_constants,
    uniform_lsi_rate,
)


class TestKappa:
    def test_no_interaction_unit_friction(self):
        assert kappa(1.0, 0.0, 0.0) == pytest.approx(2.0 / (5.0 + math.sqrt(5.0)), abs=1e-12)

    def test_friction_two(self):
        assert kappa(2.0, 0.5, 0.5) == pytest.approx(2.0 / (10.0 + 2.0 * math.sqrt(5.0)), abs=1e-12)

    def test_negative_when_condition_violated(self):
        assert kappa(1.0, 0.6, 0.5) < 0.0

    def test_denominator_identity(self):
        # kappa(beta, 0, 0) * (2 + 2 beta + beta^2 + sqrt(beta^4 + 4)) = 2 beta
        for beta in np.linspace(0.1, 5.0, 23):
            denom = 2.0 + 2.0 * beta + beta**2 + math.sqrt(beta**4 + 4.0)
            assert kappa(beta, 0.0, 0.0) * denom == pytest.approx(2.0 * beta, rel=1e-12)

    def test_strictly_decreasing_in_thetas(self):
        for beta in (0.5, 1.0, 2.0):
            ks = [kappa(beta, th, 0.1) for th in np.linspace(0.0, 0.5, 6)]
            assert all(a > b for a, b in zip(ks, ks[1:]))
            ks2 = [kappa(beta, 0.1, th) for th in np.linspace(0.0, 0.5, 6)]
            assert all(a > b for a, b in zip(ks2, ks2[1:]))

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            kappa(0.0, 0.0, 0.0)


class TestThetaPair:
    def test_reference_values(self):
        th1, th2 = theta_pair(1.0, 0.1)
        assert th1 == pytest.approx(0.1 * (0.5 + math.sqrt(5.0)), abs=1e-12)
        assert th2 == pytest.approx(0.05 * math.sqrt(5.0), abs=1e-12)

    def test_zero_interaction(self):
        assert theta_pair(1.0, 0.0) == (0.0, 0.0)

    def test_consistency_with_direct_rate_formula(self):
        # kappa(beta, theta_pair(beta, theta)) equals the direct expression
        # (2 beta - theta (1 + 3 sqrt(2 + 2 beta + beta^2))) / denom
        for beta in np.linspace(0.2, 4.0, 13):
            for theta in np.linspace(0.0, 0.2, 7):
                th1, th2 = theta_pair(beta, theta)
                root = math.sqrt(2.0 + 2.0 * beta + beta**2)
                denom = 2.0 + 2.0 * beta + beta**2 + math.sqrt(beta**4 + 4.0)
                direct = (2.0 * beta - theta * (1.0 + 3.0 * root)) / denom
                assert kappa(beta, th1, th2) == pytest.approx(direct, abs=1e-12)

    def test_reference_kinetic_rate(self):
        th1, th2 = theta_pair(1.0, 0.1)
        assert kappa(1.0, th1, th2) == pytest.approx(0.1698680, abs=1e-6)


class TestTwistConstants:
    def test_unit_friction_values(self):
        a, r, c = twist_constants(1.0)
        assert a == pytest.approx(1.2247449, abs=1e-7)
        assert r == pytest.approx(0.4082483, abs=1e-7)
        assert c == pytest.approx(1.8090170, abs=1e-7)

    def test_algebraic_identities(self):
        for beta in np.linspace(0.05, 8.0, 33):
            a, r, _ = twist_constants(beta)
            assert a * a - beta - r * a == pytest.approx(0.0, abs=1e-12)
            assert 1.0 - r * a == pytest.approx(beta / (1.0 + beta), abs=1e-12)
            assert r == pytest.approx(1.0 / math.sqrt((1.0 + beta) * (1.0 + beta + beta**2)),
                                      abs=1e-12)

    def test_r_in_open_unit_interval(self):
        for beta in np.logspace(-3, 3, 25):
            _, r, _ = twist_constants(beta)
            assert 0.0 < r < 1.0


class TestUniformLsiRate:
    def test_unit_inputs(self):
        assert uniform_lsi_rate(1.0, 1.0, 0.0) == pytest.approx(1.0)

    def test_general_point(self):
        assert uniform_lsi_rate(2.0, 0.5, 0.5) == pytest.approx(0.25)

    def test_r0_at_one_rejected(self):
        with pytest.raises(ValueError, match="r0 < 1"):
            uniform_lsi_rate(1.0, 1.0, 1.0)


class TestCombineRates:
    def test_identity_constants(self):
        bound = combine_rates(c0=1.0, t0=0.0, big_c=1.0, c1=1.0, lam=1.0, t1=0.0)
        out = bound(2.0, w2_sq_0=0.7, entropy_0=5.0)
        assert out.in_range
        assert out.w2_sq_bound == pytest.approx(math.exp(-2.0) * 0.7)

    def test_entropy_side_carries_c0(self):
        bound = combine_rates(c0=2.0, t0=1.0, big_c=3.0, c1=1.0, lam=1.0, t1=0.0)
        out = bound(2.0, w2_sq_0=1.0, entropy_0=5.0)
        start = min(1.0, 3.0 * 5.0)
        assert out.entropy_bound == pytest.approx(2.0 * math.exp(-1.0) * start)

    def test_below_validity_threshold_flagged(self):
        bound = combine_rates(c0=1.0, t0=1.0, big_c=1.0, c1=1.0, lam=1.0, t1=0.5)
        out = bound(1.2)
        assert not out.in_range
        assert out.w2_sq_bound is None

    def test_entropy_to_w2_direction(self):
        bound = combine_rates(c0=2.0, t0=0.5, big_c=4.0, c1=1.5, lam=0.7, t1=0.0,
                              direction="entropy_to_w2")
        out = bound(3.0, w2_sq_0=1.0, entropy_0=0.3)
        start = min(2.0 * 1.0, 0.3)
        coeff = 1.5 * math.exp(-0.7 * (3.0 - 0.5))
        assert out.entropy_bound == pytest.approx(coeff * start)
        assert out.w2_sq_bound == pytest.approx(4.0 * coeff * start)

    def test_nonincreasing_on_validity_range(self):
        bound = combine_rates(c0=1.5, t0=0.5, big_c=2.0, c1=3.0, lam=0.9, t1=0.25)
        ts = np.linspace(bound.valid_from, bound.valid_from + 5.0, 40)
        vals = [bound(t, w2_sq_0=1.0, entropy_0=1.0).w2_sq_bound for t in ts]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_invalid_constants_rejected(self):
        with pytest.raises(ValueError):
            combine_rates(c0=-1.0, t0=0.0, big_c=1.0, c1=1.0, lam=1.0, t1=0.0)
        with pytest.raises(ValueError):
            combine_rates(c0=1.0, t0=0.0, big_c=1.0, c1=1.0, lam=1.0, t1=0.0,
                          direction="sideways")


class TestFitExpRate:
    def test_exact_exponential(self):
        t = np.array([0.0, 1.0, 2.0])
        fit = fit_exp_rate(t, np.exp(-2.0 * t), window=(0.0, 2.0))
        assert fit.rate == pytest.approx(2.0, abs=1e-12)
        assert fit.residual == pytest.approx(0.0, abs=1e-12)

    def test_scale_goes_to_intercept(self):
        t = np.linspace(0.0, 3.0, 7)
        fit = fit_exp_rate(t, 3.0 * np.exp(-0.5 * t), window=(0.0, 3.0))
        assert fit.rate == pytest.approx(0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)

    def test_oracle_w2_curve(self):
        times = np.linspace(0.0, 6.0, 61)
        ref = GaussianMeasure([0.0], [[1.0]])
        vals = []
        for t in times:
            m, v = ou_granular_moments(1.0, 0.0, 1.0, 1.0, t)
            vals.append(gaussian_w2(GaussianMeasure([m], [[v]]), ref))
        fit = fit_exp_rate(times, np.array(vals))
        assert fit.rate == pytest.approx(1.0, abs=1e-6)

    def test_default_window_discards_leading_transient(self):
        t = np.linspace(0.0, 10.0, 11)
        fit = fit_exp_rate(t, np.exp(-t))
        assert fit.window[0] == pytest.approx(2.0)

    def test_nonpositive_values_rejected(self):
        with pytest.raises(ValueError, match="nonpositive"):
            fit_exp_rate(np.array([0.0, 1.0, 2.0]), np.array([1.0, -1.0, 0.5]),
                         window=(0.0, 2.0))

    def test_needs_three_points(self):
        with pytest.raises(ValueError, match="at least 3"):
            fit_exp_rate(np.array([0.0, 1.0]), np.array([1.0, 0.5]), window=(0.0, 1.0))
