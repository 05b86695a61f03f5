"""Split-operator propagation: grids, packets, unitarity, convergence."""

import math

import numpy as np
import pytest

from fermi_bullet import classical as cl
from fermi_bullet import observables as obs
from fermi_bullet import quantum as qm
from fermi_bullet.errors import (
    GridTooSmallError,
    InvalidParameterError,
    LeakageAbortError,
)
from fermi_bullet.model import DimensionlessParams

TWO_PI = 2.0 * math.pi


def params_of(lam=0.0, kappa=5.0, v0=20.0, kbar=1.0):
    return DimensionlessParams(lam=lam, kappa=kappa, v0=v0, kbar=kbar)


def small_grid():
    return qm.GridSpec(z_min=-10.0, z_max=54.0, n=2048)


class TestGridSpec:
    def test_basic_geometry(self):
        spec = qm.GridSpec(z_min=-4.0, z_max=4.0, n=256)
        assert spec.dz == pytest.approx(8.0 / 256)
        assert spec.z_grid[0] == -4.0
        assert spec.z_grid[-1] == pytest.approx(4.0 - spec.dz)

    def test_momentum_grid_convention(self):
        spec = qm.GridSpec(z_min=0.0, z_max=16.0, n=64)
        kbar = 3.0
        p = spec.momentum_grid(kbar)
        dp = TWO_PI * kbar / (spec.n * spec.dz)
        assert np.sort(p)[1] - np.sort(p)[0] == pytest.approx(dp)
        assert np.abs(p).max() == pytest.approx(math.pi * kbar / spec.dz)

    @pytest.mark.parametrize("n", [0, 1, 3, 100, 2**10 + 1])
    def test_power_of_two_required(self, n):
        with pytest.raises(InvalidParameterError):
            qm.GridSpec(z_min=0.0, z_max=1.0, n=n)

    def test_ordering_required(self):
        with pytest.raises(InvalidParameterError):
            qm.GridSpec(z_min=2.0, z_max=-2.0, n=64)


class TestInitGaussian:
    def test_normalized(self):
        state = qm.init_gaussian(small_grid(), 20.0, 0.0, 2.0, params_of())
        assert state.norm() == pytest.approx(1.0, abs=1e-12)

    def test_moments(self):
        spec = small_grid()
        state = qm.init_gaussian(spec, 20.0, 1.5, 2.0, params_of(kbar=2.0))
        assert state.mean_z() == pytest.approx(20.0, abs=spec.dz / 2)
        dp = TWO_PI * 2.0 / (spec.n * spec.dz)
        assert obs.mean_p(state) == pytest.approx(1.5, abs=dp / 2)

    def test_minimum_uncertainty(self):
        spec = small_grid()
        kbar = 2.0
        state = qm.init_gaussian(spec, 20.0, 0.0, 1.3, params_of(kbar=kbar))
        w = np.abs(state.psi) ** 2
        w /= w.sum()
        mz = float(np.dot(w, spec.z_grid))
        var_z = float(np.dot(w, (spec.z_grid - mz) ** 2))
        product = math.sqrt(var_z * obs.variance_p(state))
        assert product == pytest.approx(kbar / 2.0, rel=0.01)

    def test_clearance_errors(self):
        spec = small_grid()
        with pytest.raises(GridTooSmallError):
            qm.init_gaussian(spec, -8.0, 0.0, 2.0, params_of())
        with pytest.raises(GridTooSmallError):
            qm.init_gaussian(spec, 20.0, 0.0, 1.5 * spec.dz, params_of())


class TestPotential:
    def test_gravity_only(self):
        p = params_of(v0=0.0)
        z = np.array([-1.0, 0.0, 7.5])
        np.testing.assert_allclose(qm.potential(z, 0.3, p), z)

    def test_at_origin(self):
        p = params_of(lam=1.7, kappa=5.0, v0=20.0)
        assert qm.potential(0.0, 0.0, p) == pytest.approx(20.0)

    def test_on_wall_crest(self):
        p = params_of(lam=1.7, kappa=5.0, v0=20.0)
        assert qm.potential(p.lam, math.pi / 2.0, p) == pytest.approx(p.lam + p.v0, rel=1e-12)

    def test_cap_applies_to_mirror_term(self):
        p = params_of(lam=0.0, kappa=5.0, v0=20.0)
        v = qm.capped_potential(np.array([-100.0]), 0.0, p, cap=1e4)
        assert v[0] == pytest.approx(-100.0 + 1e4)


class TestSplitStep:
    def test_free_fall_momentum_translation(self):
        spec = qm.GridSpec(z_min=-20.0, z_max=108.0, n=2048)
        p = params_of(v0=0.0)
        state = qm.init_gaussian(spec, 60.0, 0.0, 2.0, p)
        var0 = obs.variance_p(state)
        final, _ = qm.propagate(state, qm.PropagatorConfig(dt=TWO_PI / 2000), 10.0)
        dp = TWO_PI * p.kbar / (spec.n * spec.dz)
        assert obs.mean_p(final) == pytest.approx(-10.0, abs=dp / 2)
        assert obs.variance_p(final) == pytest.approx(var0, rel=1e-3)

    def test_free_fall_position(self):
        spec = qm.GridSpec(z_min=-20.0, z_max=108.0, n=2048)
        p = params_of(v0=0.0)
        state = qm.init_gaussian(spec, 60.0, 0.0, 2.0, p)
        final, _ = qm.propagate(state, qm.PropagatorConfig(dt=TWO_PI / 2000), 10.0)
        assert final.mean_z() == pytest.approx(60.0 - 50.0, abs=spec.dz)

    def test_static_mirror_energy_conserved(self):
        p = params_of(lam=0.0, kappa=5.0, v0=20.0)
        spec = qm.GridSpec(z_min=-10.0, z_max=54.0, n=8192)
        state = qm.init_gaussian(spec, 10.0, 0.0, 1.0, p)

        def energy(s):
            w = np.abs(s.psi) ** 2
            w /= w.sum()
            wk = np.abs(np.fft.fft(s.psi)) ** 2
            wk /= wk.sum()
            pg = s.spec.momentum_grid(s.params.kbar)
            return float(np.dot(wk, 0.5 * pg**2) + np.dot(w, qm.potential(s.spec.z_grid, s.t, p)))

        e0 = energy(state)
        final, _ = qm.propagate(state, qm.PropagatorConfig(dt=TWO_PI / 4000), 100.0)
        assert abs(energy(final) - e0) / abs(e0) < 1e-4

    def test_single_step_norm_preserved(self):
        p = params_of(lam=1.7, kappa=5.0, v0=20.0, kbar=2.0)
        state = qm.init_gaussian(small_grid(), 20.0, 0.0, 1.0, p)
        cfg = qm.PropagatorConfig(dt=TWO_PI / 2000)
        for _ in range(50):
            state = qm.split_step(state, cfg)
        assert state.norm() == pytest.approx(1.0, abs=1e-12)

    def test_fast_path_matches_single_steps(self):
        p = params_of(lam=1.7, kappa=2.0, v0=50.0, kbar=2.0)
        spec = qm.GridSpec(z_min=-10.0, z_max=54.0, n=1024)
        state = qm.init_gaussian(spec, 10.0, 0.0, 1.0, p)
        cfg = qm.PropagatorConfig(dt=TWO_PI / 500)
        ref = state.copy()
        for _ in range(37):
            ref = qm.split_step(ref, cfg)
        fast, _ = qm.propagate(state, cfg, 37 * cfg.dt)
        np.testing.assert_allclose(fast.psi, ref.psi, atol=1e-12)

    def test_phase_wrap_warning(self):
        p = params_of(lam=0.0, kappa=5.0, v0=1e4, kbar=0.5)
        state = qm.init_gaussian(small_grid(), 5.0, 0.0, 1.0, p)
        with pytest.warns(UserWarning, match="phase per step"):
            qm.split_step(state, qm.PropagatorConfig(dt=0.5))

    def test_splitting_is_second_order(self):
        p = params_of(lam=0.0, kappa=5.0, v0=20.0)
        spec = qm.GridSpec(z_min=-10.0, z_max=54.0, n=4096)
        state = qm.init_gaussian(spec, 10.0, 0.0, 1.0, p)
        T = TWO_PI

        def final_psi(dt):
            f, _ = qm.propagate(state, qm.PropagatorConfig(dt=dt), T)
            return f.psi

        errs = []
        for denom in (800, 1600):
            dt = T / denom
            ref = final_psi(dt / 8.0)
            errs.append(np.linalg.norm(final_psi(dt) - ref) * math.sqrt(spec.dz))
        assert 3.5 < errs[0] / errs[1] < 4.5


class TestPropagate:
    def test_zero_steps_identity(self):
        p = params_of()
        state = qm.init_gaussian(small_grid(), 20.0, 0.0, 2.0, p)
        out, series = qm.propagate(state, qm.PropagatorConfig(), state.t)
        np.testing.assert_array_equal(out.psi, state.psi)
        assert series.times.size == 1

    def test_partial_final_step(self):
        p = params_of(v0=0.0)
        spec = qm.GridSpec(z_min=-20.0, z_max=108.0, n=1024)
        state = qm.init_gaussian(spec, 60.0, 0.0, 2.0, p)
        t_final = 1.2345
        out, series = qm.propagate(state, qm.PropagatorConfig(dt=0.1), t_final)
        assert out.t == pytest.approx(t_final)
        assert series.times[-1] == pytest.approx(t_final)
        assert obs.mean_p(out) == pytest.approx(-t_final, abs=0.05)

    def test_norm_column_and_unitarity(self):
        p = params_of(lam=1.7, kappa=5.0, v0=20.0, kbar=2.0)
        state = qm.init_gaussian(small_grid(), 20.0, 0.0, 1.0, p)
        out, series = qm.propagate(state, qm.PropagatorConfig(dt=TWO_PI / 1000), 20.0,
                                   qm.Recorder(record_every=100))
        drift = np.abs(series.columns["norm"] - 1.0).max()
        assert drift < 1e-10

    def test_leakage_abort_on_small_grid(self):
        p = params_of(v0=0.0)
        spec = qm.GridSpec(z_min=-20.0, z_max=44.0, n=1024)
        state = qm.init_gaussian(spec, 20.0, 0.0, 2.0, p)
        with pytest.raises(LeakageAbortError):
            qm.propagate(state, qm.PropagatorConfig(dt=TWO_PI / 1000), 40.0,
                         qm.Recorder(record_every=50))

    def test_absorber_records_loss(self):
        p = params_of(v0=0.0)
        spec = qm.GridSpec(z_min=-40.0, z_max=88.0, n=1024)
        state = qm.init_gaussian(spec, 40.0, 0.0, 2.0, p)
        cfg = qm.PropagatorConfig(dt=TWO_PI / 500, boundary="absorber", absorber_width=0.2)
        out, series = qm.propagate(state, cfg, 12.0, qm.Recorder(record_every=100))
        absorbed = series.columns["absorbed"][-1]
        assert absorbed > 0.2
        assert out.norm() == pytest.approx(1.0 - absorbed, abs=1e-6)

    def test_grid_refinement_consistency(self):
        p = params_of(lam=0.0, kappa=5.0, v0=20.0)
        results = []
        for n in (1024, 2048):
            spec = qm.GridSpec(z_min=-10.0, z_max=54.0, n=n)
            state = qm.init_gaussian(spec, 10.0, 0.0, 1.0, p)
            final, _ = qm.propagate(state, qm.PropagatorConfig(dt=TWO_PI / 1000), 10.0)
            results.append((final.mean_z(), obs.variance_p(final)))
        assert results[0][0] == pytest.approx(results[1][0], rel=1e-6)
        assert results[0][1] == pytest.approx(results[1][1], rel=1e-6)

    def test_ehrenfest_against_classical(self):
        p = params_of(lam=0.7, kappa=5.0, v0=20.0, kbar=0.05)
        spec = qm.GridSpec(z_min=-2.0, z_max=14.0, n=4096)
        dz_w = 0.05
        state = qm.init_gaussian(spec, 6.0, 0.0, dz_w, p)
        T = 2.0
        final, _ = qm.propagate(state, qm.PropagatorConfig(dt=TWO_PI / 4000), T)
        z_cl, p_cl = 6.0, 0.0
        dt = TWO_PI / 4000
        t = 0.0
        for _ in range(int(T / dt)):
            z_cl, p_cl = cl.leapfrog_step(z_cl, p_cl, t, dt, p)
            t += dt
        w = np.abs(final.psi) ** 2
        w /= w.sum()
        var_z = float(np.dot(w, (spec.z_grid - final.mean_z()) ** 2))
        assert abs(final.mean_z() - z_cl) < 3.0 * math.sqrt(var_z)

    def test_snapshot_cadence(self):
        p = params_of(v0=0.0)
        spec = qm.GridSpec(z_min=-20.0, z_max=108.0, n=1024)
        state = qm.init_gaussian(spec, 60.0, 0.0, 2.0, p)
        rec = qm.Recorder(record_every=10, snapshot_every=20, snapshot_downsample=4)
        qm.propagate(state, qm.PropagatorConfig(dt=0.05), 5.0, rec)
        raster = rec.raster()
        assert raster.values.shape == (256, len(rec.snapshot_times))
        assert raster.t_axis[0] == 0.0
        assert raster.t_axis[-1] == pytest.approx(5.0)
