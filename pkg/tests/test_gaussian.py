import numpy as np
import pytest

from mvlab import (
    GaussianMeasure,
    GranularModel,
    KineticModel,
    MeanAttraction,
    QuadraticPair,
    QuadraticPotential,
    fit_exp_rate,
    gaussian_entropy,
    gaussian_w2,
    kinetic_moment_curve,
    kinetic_moments,
    ou_granular_moments,
    stationary_measure,
)


def std_normal(d=1):
    return GaussianMeasure(np.zeros(d), np.eye(d))


class TestOuMoments:
    def test_unit_variance_is_a_fixed_point(self):
        for t in (0.0, 0.5, 2.0, 10.0):
            mean, var = ou_granular_moments(1.0, 0.0, 1.0, 1.0, t)
            assert mean == pytest.approx(np.exp(-t))
            assert var == pytest.approx(1.0)

    def test_time_zero_identity(self):
        assert ou_granular_moments(1.0, 0.0, 0.3, 0.7, 0.0) == pytest.approx((0.3, 0.7))

    def test_long_time_limit_with_interaction(self):
        mean, var = ou_granular_moments(1.0, 1.0, 0.0, 1.0, 60.0)
        assert mean == 0.0
        assert var == pytest.approx(0.5)

    def test_nonpositive_effective_curvature_rejected(self):
        with pytest.raises(ValueError, match="stationary variance"):
            ou_granular_moments(1.0, -1.0, 0.0, 1.0, 1.0)

    def test_vectorized_time(self):
        t = np.array([0.0, 1.0, 2.0])
        mean, var = ou_granular_moments(2.0, 0.0, 1.0, 1.0, t)
        np.testing.assert_allclose(mean, np.exp(-2.0 * t))


class TestKineticMoments:
    def test_stationary_is_invariant(self):
        km = KineticModel(1, 1, np.eye(1), 1.0, MeanAttraction(0.0))
        st = stationary_measure(km)
        np.testing.assert_allclose(np.diag(st.cov), [1.0, 1.0])
        out = kinetic_moments(km, st, 3.0)
        np.testing.assert_allclose(out.mean, st.mean, atol=1e-12)
        np.testing.assert_allclose(out.cov, st.cov, atol=1e-12)

    def test_time_zero_identity(self):
        km = KineticModel(1, 1, np.eye(1), 1.0, MeanAttraction(0.1))
        init = GaussianMeasure([1.0, -1.0], np.diag([2.0, 0.5]))
        out = kinetic_moments(km, init, 0.0)
        np.testing.assert_array_equal(out.mean, init.mean)
        np.testing.assert_array_equal(out.cov, init.cov)

    def test_long_time_covariance_with_interaction(self):
        km = KineticModel(1, 1, np.eye(1), 1.0, MeanAttraction(0.1))
        init = GaussianMeasure([1.0, 0.0], np.eye(2))
        out = kinetic_moments(km, init, 40.0)
        np.testing.assert_allclose(np.diag(out.cov), [1.0 / 1.1, 1.0], atol=1e-8)
        np.testing.assert_allclose(out.mean, [0.0, 0.0], atol=1e-8)

    def test_stationary_is_lyapunov_fixed_point(self):
        # Gibbs-form covariance solves F S + S F^T + 2 diag(0, I) = 0
        km = KineticModel(1, 1, np.eye(1), 1.3, MeanAttraction(0.2))
        st = stationary_measure(km)
        from mvlab.gaussian import _kinetic_matrices

        _, f, src = _kinetic_matrices(km)
        np.testing.assert_allclose(f @ st.cov + st.cov @ f.T + src, np.zeros((2, 2)), atol=1e-12)

    def test_curve_matches_pointwise_calls(self):
        km = KineticModel(1, 1, np.eye(1), 1.0, MeanAttraction(0.1))
        init = GaussianMeasure([1.0, 0.5], np.eye(2))
        times = [0.2, 0.7, 1.5]
        curve = kinetic_moment_curve(km, init, times)
        for t, law in zip(times, curve):
            single = kinetic_moments(km, init, t)
            np.testing.assert_allclose(law.mean, single.mean, atol=1e-10)
            np.testing.assert_allclose(law.cov, single.cov, atol=1e-10)


class TestGaussianW2:
    def test_mean_shift_only(self):
        assert gaussian_w2(std_normal(), GaussianMeasure([2.0], [[1.0]])) == pytest.approx(2.0)

    def test_identical_measures(self):
        g = GaussianMeasure([0.3, -0.2], [[2.0, 0.5], [0.5, 1.0]])
        assert gaussian_w2(g, g) == pytest.approx(0.0, abs=1e-9)

    def test_variance_difference_1d(self):
        assert gaussian_w2(std_normal(), GaussianMeasure([0.0], [[4.0]])) == pytest.approx(1.0)

    def test_metric_axioms_on_random_triples(self):
        g = np.random.default_rng(7)
        for _ in range(25):
            ms = [GaussianMeasure(g.normal(size=2), c @ c.T + 0.2 * np.eye(2))
                  for c in g.normal(size=(3, 2, 2))]
            d01 = gaussian_w2(ms[0], ms[1])
            d10 = gaussian_w2(ms[1], ms[0])
            assert d01 == pytest.approx(d10, abs=1e-12)
            assert gaussian_w2(ms[0], ms[2]) <= d01 + gaussian_w2(ms[1], ms[2]) + 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gaussian_w2(std_normal(1), std_normal(2))


class TestGaussianEntropy:
    def test_zero_at_equality(self):
        g = GaussianMeasure([1.0, 2.0], [[1.5, 0.2], [0.2, 0.8]])
        assert gaussian_entropy(g, g) == pytest.approx(0.0, abs=1e-12)

    def test_mean_shift_formula(self):
        assert gaussian_entropy(GaussianMeasure([1.5], [[1.0]]), std_normal()) == pytest.approx(
            1.5**2 / 2
        )

    def test_variance_formula(self):
        s2 = 4.0
        assert gaussian_entropy(GaussianMeasure([0.0], [[s2]]), std_normal()) == pytest.approx(
            0.5 * (s2 - 1 - np.log(s2))
        )

    def test_nonnegative_on_grid(self):
        for m in np.linspace(-2, 2, 7):
            for s2 in np.linspace(0.25, 4.0, 7):
                val = gaussian_entropy(GaussianMeasure([m], [[s2]]), std_normal())
                assert val >= 0.0
                if m == 0.0 and s2 == 1.0:
                    assert val == pytest.approx(0.0, abs=1e-12)

    def test_talagrand_inequality_for_standard_gaussian_reference(self):
        # W2(p, N(0,I))^2 <= 2 Ent(p | N(0,I)) on a grid of 1-d Gaussians
        ref = std_normal()
        for m in np.linspace(-2, 2, 20):
            for s2 in np.linspace(0.25, 4.0, 20):
                p = GaussianMeasure([m], [[s2]])
                assert gaussian_w2(p, ref) ** 2 <= 2.0 * gaussian_entropy(p, ref) + 1e-12


class TestStationaryMeasure:
    def test_granular_effective_curvature(self):
        m = GranularModel(QuadraticPotential(1.0), QuadraticPair(1.0), np.eye(1), 1)
        assert stationary_measure(m).cov[0, 0] == pytest.approx(0.5)

    def test_granular_zero_curvature_rejected(self):
        m = GranularModel(QuadraticPotential(1.0), QuadraticPair(-1.0), np.eye(1), 1)
        with pytest.raises(ValueError, match="curvature"):
            stationary_measure(m)

    def test_kinetic_identity_b(self):
        km = KineticModel(1, 1, np.eye(1), 1.0, MeanAttraction(0.0))
        np.testing.assert_allclose(stationary_measure(km).cov, np.eye(2))

    def test_granular_fixed_point_of_moment_flow(self):
        lam, delta = 1.0, 0.5
        st_var = 1.0 / (lam + delta)
        for t in (0.5, 2.0, 7.0):
            mean, var = ou_granular_moments(lam, delta, 0.0, st_var, t)
            assert mean == 0.0
            assert var == pytest.approx(st_var, rel=1e-12)


class TestDecayOracle:
    def test_w2_curve_has_unit_rate(self):
        # with lam=1, delta=0, m0=1, var0=1 the W2 distance to the stationary
        # law is exactly exp(-t); the fitter must recover rate 1 to 1e-6
        st = std_normal()
        times = np.linspace(0.0, 5.0, 26)
        vals = []
        for t in times:
            m, v = ou_granular_moments(1.0, 0.0, 1.0, 1.0, t)
            vals.append(gaussian_w2(GaussianMeasure([m], [[v]]), st))
        np.testing.assert_allclose(vals, np.exp(-times), atol=1e-12)
        fit = fit_exp_rate(times, np.array(vals), window=(0.0, 5.0))
        assert fit.rate == pytest.approx(1.0, abs=1e-6)
        assert fit.residual < 1e-9


class TestGaussianMeasureValidation:
    def test_requires_spd(self):
        with pytest.raises(ValueError, match="positive definite"):
            GaussianMeasure([0.0], [[0.0]])

    def test_requires_symmetry(self):
        with pytest.raises(ValueError, match="symmetric"):
            GaussianMeasure([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="disagree"):
            GaussianMeasure([0.0, 0.0], [[1.0]])
