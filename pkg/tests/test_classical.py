"""Trajectory and ensemble dynamics: soft-mirror leapfrog and hard-wall bouncer."""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from fermi_bullet import classical as cl
from fermi_bullet.errors import InvalidParameterError
from fermi_bullet.model import DimensionlessParams
from fermi_bullet.quantum import potential


def params_of(lam=1.7, kappa=5.0, v0=20.0, kbar=14.0):
    return DimensionlessParams(lam=lam, kappa=kappa, v0=v0, kbar=kbar)


class TestForce:
    def test_zero_at_balance_point(self):
        p = params_of(lam=0.7, kappa=1.0, v0=1.0)
        assert cl.classical_force(0.0, 0.0, p) == pytest.approx(0.0, abs=1e-15)

    def test_pure_gravity_far_above(self):
        p = params_of()
        assert cl.classical_force(1e3, 1.0, p) == pytest.approx(-1.0)

    def test_on_the_wall(self):
        p = params_of(kappa=5.0, v0=2.0)
        t = 0.83
        z = p.lam * math.sin(t)
        assert cl.classical_force(z, t, p) == pytest.approx(9.0, rel=1e-12)

    def test_cap_and_overflow_flag(self):
        p = params_of(kappa=5.0, v0=20.0)
        z_deep = -200.0
        assert cl.classical_force(z_deep, 0.0, p) == cl.DEFAULT_FORCE_CAP
        assert cl.exp_overflow(z_deep, 0.0, p)
        assert not cl.exp_overflow(1.0, 0.0, p)


class TestSoftStep:
    def test_free_fall_is_exact(self):
        p = params_of(v0=0.0)
        cfg = cl.IntegratorConfig(dt=1e-2)
        pt = cl.PhasePoint(5.0, 0.7, 0.0)
        out = cl.step_soft(pt, p, cfg)
        dt = cfg.dt
        assert out.z == pytest.approx(5.0 + 0.7 * dt - 0.5 * dt * dt, rel=1e-14)
        assert out.p == pytest.approx(0.7 - dt, rel=1e-14)

    def test_energy_conservation_second_order(self):
        p = params_of(lam=0.0, kappa=5.0, v0=20.0)

        def max_drift(dt):
            z, mom = 3.0, 0.0
            h0 = 0.5 * mom**2 + potential(z, 0.0, p)
            worst = 0.0
            t = 0.0
            for _ in range(int(5.0 / dt)):
                z, mom = cl.leapfrog_step(z, mom, t, dt, p)
                t += dt
                worst = max(worst, abs(0.5 * mom**2 + potential(z, t, p) - h0))
            return worst

        ratio = max_drift(2e-3) / max_drift(1e-3)
        assert 3.0 < ratio < 5.0

    def test_time_reversal(self):
        p = params_of(lam=1.7, kappa=5.0, v0=100.0)
        z, mom, t = 10.0, 0.0, 0.0
        dt = 1e-3
        n = 200
        for i in range(n):
            z, mom = cl.leapfrog_step(z, mom, t + i * dt, dt, p)
        for i in range(n):
            z, mom = cl.leapfrog_step(z, mom, t + (n - i) * dt, -dt, p)
        assert z == pytest.approx(10.0, abs=1e-10)
        assert mom == pytest.approx(0.0, abs=1e-10)

    def test_diverged_state_raises(self):
        p = params_of(kappa=5.0, v0=1e300)
        cfg = cl.IntegratorConfig(dt=10.0, force_cap=1e308)
        with np.errstate(over="ignore"), pytest.raises(cl.IntegrationDivergedError):
            pt = cl.PhasePoint(-50.0, 0.0, 0.0)
            for _ in range(10):
                pt = cl.step_soft(pt, p, cfg)

    def test_mode_check(self):
        with pytest.raises(InvalidParameterError):
            cl.step_soft(cl.PhasePoint(1, 0), params_of(),
                         cl.IntegratorConfig(mode="hard"))


class TestHardWall:
    def test_static_drop_oracle(self):
        p = params_of(lam=0.0, v0=0.0)
        cfg = cl.IntegratorConfig(dt=10.0, mode="hard")
        out = cl.step_hardwall(cl.PhasePoint(10.0, 0.0, 0.0), p, cfg)
        t_imp = math.sqrt(20.0)
        tau = 10.0 - t_imp
        assert out.z == pytest.approx(t_imp * tau - 0.5 * tau**2, abs=1e-10)
        assert out.p == pytest.approx(t_imp - tau, abs=1e-10)

    def test_reflection_against_root_oracle(self):
        # independent impact-time oracle: brentq on the analytic flight
        p = params_of(lam=0.3, v0=0.0)
        cfg = cl.IntegratorConfig(dt=8.0, mode="hard")
        z0, p0 = 6.0, -0.5
        out = cl.step_hardwall(cl.PhasePoint(z0, p0, 0.0), p, cfg)

        def gap(t):
            return z0 + p0 * t - 0.5 * t * t - p.lam * math.sin(t)

        t_imp = brentq(gap, 0.1, 6.0, xtol=1e-13)
        p_in = p0 - t_imp
        u = p.lam * math.cos(t_imp)
        p_out = -p_in + 2.0 * u
        tau = cfg.dt - t_imp
        z_exp = p.lam * math.sin(t_imp) + p_out * tau - 0.5 * tau**2
        assert out.p == pytest.approx(p_out - tau, abs=1e-9)
        assert out.z == pytest.approx(z_exp, abs=1e-9)
        # energy in the instantaneous wall frame is conserved exactly
        assert (p_out - u) ** 2 == pytest.approx((p_in - u) ** 2, rel=1e-12)

    def test_bounce_speed_constant_without_modulation(self):
        p = params_of(lam=0.0, v0=0.0)
        cfg = cl.IntegratorConfig(dt=0.5, mode="hard")
        pt = cl.PhasePoint(10.0, 0.0, 0.0)
        speeds = []
        for _ in range(400):
            pt = cl.step_hardwall(pt, p, cfg)
            speeds.append(abs(pt.p))
        assert max(speeds) <= math.sqrt(20.0) + 1e-9

    def test_bounce_period_closed_form(self):
        # ten bounces of the static bouncer return to the apex
        p = params_of(lam=0.0, v0=0.0)
        period = 2.0 * math.sqrt(20.0)
        ens = cl.Ensemble(z=np.array([10.0]), p=np.array([0.0]), t=0.0, rng_seed=0)
        out, _ = cl.evolve_ensemble(ens, p, cl.IntegratorConfig(dt=0.25, mode="hard"),
                                    10.0 * period, record_every=50)
        assert out.z[0] == pytest.approx(10.0, abs=1e-9)
        assert out.p[0] == pytest.approx(0.0, abs=1e-9)

    def test_starting_below_wall_rejected(self):
        p = params_of(lam=1.0, v0=0.0)
        cfg = cl.IntegratorConfig(dt=0.5, mode="hard")
        with pytest.raises(InvalidParameterError):
            cl.step_hardwall(cl.PhasePoint(-2.0, 0.0, math.pi / 2.0), p, cfg)


class TestSampling:
    def test_deterministic(self):
        d = cl.InitialDescriptor(z0=10.0, p0=1.0, dz=0.5, dp=0.3)
        a = cl.sample_initial(d, 1000, seed=7)
        b = cl.sample_initial(d, 1000, seed=7)
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.p, b.p)

    def test_single_point_degenerate(self):
        for shape in ("gaussian", "uniform"):
            d = cl.InitialDescriptor(z0=3.0, p0=-1.0, dz=0.0, dp=0.0, shape=shape)
            e = cl.sample_initial(d, 1, seed=0)
            assert (e.z[0], e.p[0]) == (3.0, -1.0)

    def test_gaussian_statistics(self):
        d = cl.InitialDescriptor(z0=10.0, p0=0.0, dz=2.0, dp=1.0)
        e = cl.sample_initial(d, 100_000, seed=3)
        assert abs(e.z.mean() - 10.0) < 5.0 * 2.0 / math.sqrt(100_000)
        assert e.z.std() == pytest.approx(2.0, rel=0.02)
        assert e.p.std() == pytest.approx(1.0, rel=0.02)

    def test_uniform_bounds(self):
        d = cl.InitialDescriptor(z0=0.0, p0=0.0, dz=1.0, dp=0.5, shape="uniform")
        e = cl.sample_initial(d, 5000, seed=1)
        assert np.all(np.abs(e.z) <= 1.0) and np.all(np.abs(e.p) <= 0.5)

    def test_wall_reach_warning(self):
        d = cl.InitialDescriptor(z0=1.0, p0=0.0, dz=0.1, dp=0.1)
        with pytest.warns(UserWarning):
            cl.sample_initial(d, 10, seed=0, lam=1.7)

    def test_bad_inputs(self):
        with pytest.raises(InvalidParameterError):
            cl.InitialDescriptor(z0=0, p0=0, shape="ring")
        with pytest.raises(InvalidParameterError):
            cl.sample_initial(cl.InitialDescriptor(z0=0, p0=0), 0, seed=0)


class TestEnsembleEvolution:
    def test_static_hardwall_variance_periodic(self):
        # points on one energy shell share the period 2 sqrt(2E)
        p = params_of(lam=0.0, v0=0.0)
        energy = 8.0
        z = np.linspace(0.5, 6.0, 12)
        mom = np.sqrt(2.0 * (energy - z)) * np.where(np.arange(12) % 2 == 0, 1.0, -1.0)
        ens = cl.Ensemble(z=z, p=mom, t=0.0, rng_seed=0)
        period = 2.0 * math.sqrt(2.0 * energy)
        var0 = ens.p.var()
        out, _ = cl.evolve_ensemble(ens, p, cl.IntegratorConfig(dt=0.2, mode="hard"),
                                    3.0 * period, record_every=1000)
        assert out.p.var() == pytest.approx(var0, rel=1e-6)

    def test_acceleration_trend_short(self):
        p = params_of(lam=1.7)
        desc = cl.InitialDescriptor(z0=20.25, p0=0.0, dz=0.2, dp=0.2)
        ens = cl.sample_initial(desc, 400, seed=11)
        out, series = cl.evolve_ensemble(ens, p, cl.IntegratorConfig(dt=0.5, mode="hard"),
                                         120.0, record_every=20)
        mean_p2 = series.columns["mean_p2"]
        assert mean_p2[-1] > 25.0 * max(mean_p2[0], 1e-6)

    def test_kam_regime_bounded_short(self):
        p = params_of(lam=0.1)
        desc = cl.InitialDescriptor(z0=0.5, p0=5.0, dz=0.1, dp=0.1)
        ens = cl.sample_initial(desc, 400, seed=11, lam=None)
        out, series = cl.evolve_ensemble(ens, p, cl.IntegratorConfig(dt=0.5, mode="hard"),
                                         120.0, record_every=1)
        mean_p2 = series.columns["mean_p2"]
        assert mean_p2.max() <= 1.2 * mean_p2[0]

    def test_record_shape_and_time_axis(self):
        p = params_of(lam=0.0, v0=0.0)
        ens = cl.Ensemble(z=np.array([5.0, 6.0]), p=np.array([0.0, 0.1]), t=0.0, rng_seed=0)
        out, series = cl.evolve_ensemble(ens, p, cl.IntegratorConfig(dt=0.1, mode="hard"),
                                         1.05, record_every=3)
        assert series.times[0] == 0.0
        assert series.times[-1] == pytest.approx(1.05)
        assert set(series.names) == {"mean_z", "mean_p", "mean_p2", "var_p", "fail_frac"}
        assert out.t == pytest.approx(1.05)

    def test_failures_tolerated_until_threshold(self):
        p = params_of(lam=0.0, kappa=5.0, v0=20.0)
        # one of the two points starts absurdly low: capped force blows it up
        ens = cl.Ensemble(z=np.array([10.0, 10.0]), p=np.array([0.0, 0.0]), t=0.0, rng_seed=0)
        cfg = cl.IntegratorConfig(dt=1e-3, max_fail_frac=0.6)
        out, series = cl.evolve_ensemble(ens, p, cfg, 0.5, record_every=100)
        assert series.columns["fail_frac"][-1] == 0.0

    def test_liouville_area_coarse(self):
        # a small uniform patch keeps its convex-hull area under soft evolution
        from scipy.spatial import ConvexHull

        p = params_of(lam=1.7, kappa=5.0, v0=20.0)
        theta = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
        z = 8.0 + 0.05 * np.cos(theta)
        mom = 0.05 * np.sin(theta)
        area0 = ConvexHull(np.column_stack([z, mom])).volume
        cfg = cl.IntegratorConfig(dt=2.0 * math.pi / 2000.0)
        t = 0.0
        for _ in range(400):
            z, mom = cl.leapfrog_step(z, mom, t, cfg.dt, p)
            t += cfg.dt
        area1 = ConvexHull(np.column_stack([z, mom])).volume
        assert area1 == pytest.approx(area0, rel=0.2)
