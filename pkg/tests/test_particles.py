import numpy as np
import pytest

from mvlab import (
    EmpiricalMeasure,
    GranularModel,
    KineticModel,
    MeanAttraction,
    ParticleBlowUp,
    QuadraticPair,
    QuadraticPotential,
    SimConfig,
    em_step,
    moment_summary,
    sample_gaussian,
    simulate,
    simulate_pair,
    snapshot_to_csv,
)
from mvlab import GaussianMeasure, kinetic_moments, stationary_measure
from mvlab import rng


def granular(curvature=1.0, strength=0.0, diffusion=1.0, dim=1):
    return GranularModel(QuadraticPotential(curvature), QuadraticPair(strength),
                         np.asarray(diffusion, dtype=float), dim)


def kinetic(beta=1.0, theta=0.0):
    return KineticModel(1, 1, np.eye(1), beta, MeanAttraction(theta))


class TestEmStep:
    def test_zero_drift_zero_noise_leaves_state(self):
        m = granular(curvature=0.0, strength=0.0)
        state = EmpiricalMeasure(np.array([[1.0], [-2.0]]))
        out = em_step(m, state, 0.1, np.zeros((2, 1)))
        np.testing.assert_array_equal(out.points, state.points)

    def test_explicit_euler_on_quadratic_well(self):
        # dx/dt = -x, one step of 0.5 from 1.0 (noise off)
        m = granular(curvature=1.0)
        state = EmpiricalMeasure(np.array([[1.0]]))
        out = em_step(m, state, 0.5, np.zeros((1, 1)))
        assert out.points[0, 0] == pytest.approx(0.5)

    def test_attraction_toward_the_mean(self):
        m = granular(curvature=0.0, strength=1.0)
        state = EmpiricalMeasure(np.array([[0.0], [2.0]]))
        out = em_step(m, state, 0.1, np.zeros((2, 1)))
        np.testing.assert_allclose(out.points[:, 0], [0.1, 1.9])

    def test_noise_scale_is_sqrt_2a_sqrt_dt(self):
        m = granular(curvature=0.0, strength=0.0, diffusion=2.0)
        state = EmpiricalMeasure(np.array([[0.0]]))
        out = em_step(m, state, 0.25, np.ones((1, 1)))
        assert out.points[0, 0] == pytest.approx(np.sqrt(2 * 2.0) * 0.5)

    def test_kinetic_position_gets_no_noise(self):
        km = kinetic()
        state = EmpiricalMeasure(np.array([[1.0, 2.0]]))
        noise = np.array([[123.0, 0.0]])  # x-noise column must be ignored
        out = em_step(km, state, 0.1, noise)
        assert out.points[0, 0] == pytest.approx(1.0 + 2.0 * 0.1)

    def test_kinetic_x_increment_equals_y_dt(self):
        km = kinetic(beta=1.3, theta=0.2)
        g = rng.generator(5, rng.STREAM_SELFTEST)
        state = EmpiricalMeasure(g.standard_normal((50, 2)))
        noise = g.standard_normal((50, 2))
        out = em_step(km, state, 0.05, noise)
        np.testing.assert_allclose(
            out.points[:, 0] - state.points[:, 0], state.points[:, 1] * 0.05, atol=1e-15
        )

    def test_exchangeable_under_matched_permutation(self):
        m = granular(curvature=1.0, strength=0.7)
        g = rng.generator(6, rng.STREAM_SELFTEST)
        pts = g.standard_normal((20, 1))
        noise = g.standard_normal((20, 1))
        perm = g.permutation(20)
        out = em_step(m, EmpiricalMeasure(pts), 0.1, noise)
        out_perm = em_step(m, EmpiricalMeasure(pts[perm]), 0.1, noise[perm])
        np.testing.assert_array_equal(out_perm.points, out.points[perm])

    def test_blowup_names_particle(self):
        m = granular()
        state = EmpiricalMeasure(np.array([[1.0], [1.0]]))
        with pytest.raises(ParticleBlowUp, match="particle 1"):
            em_step(m, state, 0.1, np.array([[0.0], [np.inf]]))

    def test_noise_shape_checked(self):
        m = granular()
        with pytest.raises(ValueError, match="noise shape"):
            em_step(m, EmpiricalMeasure(np.zeros((2, 1))), 0.1, np.zeros((3, 1)))


class TestSimulate:
    def test_horizon_equals_dt_gives_two_snapshots(self):
        m = granular()
        traj = simulate(m, EmpiricalMeasure(np.zeros((3, 1))),
                        SimConfig(dt=0.1, horizon=0.1, seed=1))
        assert len(traj.snapshots) == 2
        np.testing.assert_allclose(traj.times, [0.0, 0.1])

    def test_reproducible_bit_for_bit(self):
        m = granular(strength=0.3)
        init = EmpiricalMeasure(np.linspace(-1, 1, 11)[:, None])
        cfg = SimConfig(dt=0.01, horizon=0.3, seed=99, record_every=5)
        t1 = simulate(m, init, cfg)
        t2 = simulate(m, init, cfg)
        for a, b in zip(t1.snapshots, t2.snapshots):
            np.testing.assert_array_equal(a.points, b.points)

    def test_ou_mean_matches_closed_form(self):
        # mean ODE m' = -m; N large enough for a 3-sigma band
        n, seed = 10000, 42
        m = granular(curvature=1.0, strength=0.0)
        init = EmpiricalMeasure(
            sample_gaussian(GaussianMeasure([1.0], [[1.0]]), n, seed, rng.STREAM_INIT)
        )
        traj = simulate(m, init, SimConfig(dt=1e-3, horizon=1.0, seed=seed, record_every=250))
        m_hat = traj.final.mean[0]
        assert abs(m_hat - np.exp(-1.0)) < 3.0 / np.sqrt(n)

    def test_kinetic_second_moments_match_oracle(self):
        n, seed = 10000, 17
        km = kinetic(beta=1.0, theta=0.0)
        init_spec = GaussianMeasure([0.5, 0.0], np.diag([0.5, 2.0]))
        init = EmpiricalMeasure(sample_gaussian(init_spec, n, seed, rng.STREAM_INIT))
        traj = simulate(km, init, SimConfig(dt=1e-3, horizon=1.0, seed=seed, record_every=1000))
        oracle = kinetic_moments(km, init_spec, 1.0)
        cov_hat = traj.final.cov()
        # sample covariance entries fluctuate at about var * sqrt(2/n)
        tol = 3.0 * np.sqrt(2.0 / n) * np.maximum(np.abs(oracle.cov), 0.5)
        assert np.all(np.abs(cov_hat - oracle.cov) < tol + 3e-3)
        assert np.all(np.abs(traj.final.mean - oracle.mean) < 3.0 * np.sqrt(np.diag(oracle.cov) / n) + 2e-3)

    def test_free_particles_mean_variance_grows_like_2t_over_n(self):
        # lam = delta = 0: every particle is a sqrt(2)-Brownian motion, so the
        # cloud mean has variance 2 t / N.  Disjoint blocks of one big run act
        # as independent replicas.
        m = granular(curvature=0.0, strength=0.0)
        block, reps, seed = 64, 512, 31
        init = EmpiricalMeasure(np.zeros((block * reps, 1)))
        t_end = 0.64
        traj = simulate(m, init, SimConfig(dt=0.01, horizon=t_end, seed=seed, record_every=64))
        means = traj.final.points[:, 0].reshape(reps, block).mean(axis=1)
        var_hat = means.var(ddof=1)
        expected = 2.0 * t_end / block
        assert abs(var_hat - expected) < 4.0 * expected * np.sqrt(2.0 / (reps - 1))

    def test_blowup_reports_step(self):
        m = granular(curvature=-80.0)  # violently unstable well
        init = EmpiricalMeasure(np.array([[1e150], [0.0]]))
        with pytest.raises(ParticleBlowUp, match="step"):
            simulate(m, init, SimConfig(dt=1.0, horizon=10.0, seed=2))


class TestSimulatePair:
    def test_equal_inits_stay_identical(self):
        m = granular(strength=0.4)
        init = EmpiricalMeasure(np.linspace(-1, 1, 8)[:, None])
        t1, t2 = simulate_pair(m, init, EmpiricalMeasure(init.points.copy()),
                               SimConfig(dt=0.01, horizon=0.2, seed=3))
        for a, b in zip(t1.snapshots, t2.snapshots):
            np.testing.assert_array_equal(a.points, b.points)

    def test_paired_distance_contracts_at_ou_rate(self):
        # synchronous noise cancels in the difference, so the gap follows
        # d(gap)/dt = -gap exactly up to Euler error
        m = granular(curvature=1.0, strength=0.0)
        g = rng.generator(8, rng.STREAM_SELFTEST)
        p = g.standard_normal((32, 1))
        q = p + g.standard_normal((32, 1))
        dt, horizon = 1e-3, 1.0
        t1, t2 = simulate_pair(m, EmpiricalMeasure(p), EmpiricalMeasure(q),
                               SimConfig(dt=dt, horizon=horizon, seed=4, record_every=1000))
        gap0 = np.linalg.norm(p - q)
        gap1 = np.linalg.norm(t1.final.points - t2.final.points)
        assert gap1 == pytest.approx(np.exp(-horizon) * gap0, rel=5 * dt)

    def test_unequal_counts_rejected(self):
        m = granular()
        with pytest.raises(ValueError, match="equal particle counts"):
            simulate_pair(m, EmpiricalMeasure(np.zeros((2, 1))),
                          EmpiricalMeasure(np.zeros((3, 1))), SimConfig(dt=0.1, horizon=0.1, seed=1))


class TestExports:
    def test_moment_summary_roundtrip(self):
        meas = EmpiricalMeasure(np.array([[1.0, 2.0], [3.0, 4.0]]))
        s = moment_summary(meas)
        assert s["n"] == 2 and s["dim"] == 2
        np.testing.assert_allclose(s["mean"], [2.0, 3.0])

    def test_snapshot_csv(self, tmp_path):
        meas = EmpiricalMeasure(np.array([[1.5, -2.0], [0.25, 3.0]]))
        path = tmp_path / "snap.csv"
        snapshot_to_csv(meas, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x_1,x_2"
        assert len(lines) == 3
        np.testing.assert_allclose([float(v) for v in lines[1].split(",")], [1.5, -2.0])

    def test_trajectory_times_validated(self):
        from mvlab import Trajectory

        with pytest.raises(ValueError, match="increase"):
            Trajectory(times=np.array([0.0, 0.0]),
                       snapshots=[EmpiricalMeasure(np.zeros((1, 1)))] * 2, seed=0)
