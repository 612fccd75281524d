"""Time-integration tests: conservation, reversal order, stochastic /
deterministic consistency, CFL, observers, checkpoint resume, doubling."""

import math

import numpy as np
import pytest

from conftest import sin_sin
from tflab.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from tflab.dynamics import (
    Observer,
    SimulationBlowupError,
    SpdeState,
    StepControl,
    cfl_dt,
    doubling_time,
    euler_step_2d,
    euler_step_3d_galerkin,
    integrate,
    spde_step_2d,
    spde_step_3d,
)
from tflab.fields import (
    SobolevIndex,
    VelocityField,
    VorticityField2D,
    random_velocity,
    random_vorticity,
    sobolev_norm,
    sobolev_norm_sq,
)
from tflab.forcing import NoiseSpectrum, RngStream, make_spectrum, sample_stationary_linear
from tflab.grid import make_grid
from tflab.operators import biot_savart, galerkin_project


def shear_data(grid, scale=1.0):
    f = VorticityField2D.zero(grid)
    f.coeffs[0, 1] = f.coeffs[0, -1] = 0.5
    f.coeffs[1, 2] = f.coeffs[-1, -2] = 0.15
    f.coeffs[2, 1] = f.coeffs[-2, -1] = 0.1
    f.coeffs[3, -1] = f.coeffs[-3, 1] = 0.05
    return VorticityField2D(grid, f.coeffs * scale)


class TestDeterministic2D:
    def test_eigenfunction_stationary(self, grid64):
        xi = sin_sin(grid64)
        out = euler_step_2d(xi, 0.05)
        assert np.max(np.abs(out.coeffs - xi.coeffs)) < 1e-14

    def test_reversal_order(self, grid64, stream):
        xi = random_vorticity(grid64, stream, peak=6, scale=1.5)
        errs = []
        for dt in (0.02, 0.01):
            back = euler_step_2d(euler_step_2d(xi, dt), -dt)
            errs.append(np.max(np.abs(back.coeffs - xi.coeffs)))
        assert errs[0] < 1e-4
        assert errs[1] < errs[0] / 16.0  # at least fifth-order local error

    def test_conservation_short(self, grid64, stream):
        xi0 = random_vorticity(grid64, stream, peak=4, scale=1.0)
        e0 = sobolev_norm_sq(xi0, SobolevIndex(-1.0))
        z0 = sobolev_norm_sq(xi0, SobolevIndex(0.0))
        state = SpdeState(xi0, 0.0, 0.0, 0.5, None, RngStream(0, 0))
        state = integrate(state, 0.5, StepControl(c_cfl=0.3))
        assert abs(sobolev_norm_sq(state.field, SobolevIndex(-1.0)) - e0) / e0 < 1e-8
        assert abs(sobolev_norm_sq(state.field, SobolevIndex(0.0)) - z0) / z0 < 1e-8

    def test_blowup_guard(self, grid64, stream):
        xi = random_vorticity(grid64, stream, peak=10, scale=50.0)
        with pytest.raises(SimulationBlowupError):
            state = SpdeState(xi, 0.0, 0.0, 0.5, None, RngStream(0, 0))
            for _ in range(200):
                state = SpdeState(euler_step_2d(state.field, 0.5), state.t + 0.5,
                                  0.0, 0.5, None, state.stream)


class TestDeterministic3D:
    def test_zero_fixed_point(self, grid3d):
        out = euler_step_3d_galerkin(VelocityField.zero(grid3d), 0.1, 7)
        assert np.max(np.abs(out.coeffs)) == 0.0

    def test_projects_into_ball(self, grid3d, stream):
        u = random_velocity(grid3d, stream, peak=5, scale=1.0)
        out = euler_step_3d_galerkin(u, 1e-3, 4)
        outside = grid3d.k2 > 16.0
        assert np.max(np.abs(out.coeffs[:, outside])) == 0.0

    def test_energy_conservation_short(self, grid3d, stream):
        u0 = galerkin_project(random_velocity(grid3d, stream, peak=3, scale=1.0), 7)
        e0 = sobolev_norm_sq(u0, SobolevIndex(0.0))
        state = SpdeState(u0, 0.0, 0.0, 0.5, 7, RngStream(0, 0))
        state = integrate(state, 0.5, StepControl(c_cfl=0.1))
        assert abs(sobolev_norm_sq(state.field, SobolevIndex(0.0)) - e0) / e0 < 1e-8


class TestSpdeSteppers:
    def test_pure_decay_single_mode(self, grid64):
        xi = VorticityField2D.zero(grid64)
        xi.coeffs[2, 0] = xi.coeffs[-2, 0] = 0.3
        state = SpdeState(xi, 0.0, 1.0, 0.5, None, RngStream(1, 0))
        out = spde_step_2d(state, 0.25, None)
        assert abs(out.field.coeffs[2, 0] - 0.3 * math.exp(-8.0 * 0.25)) < 1e-14

    def test_zero_amplitude_spectrum_matches_none(self, grid64, stream):
        xi = random_vorticity(grid64, stream, peak=6, scale=1.0)
        zero_spec = NoiseSpectrum(grid64, np.zeros(grid64.shape), "custom", {})
        a = spde_step_2d(SpdeState(xi.copy(), 0.0, 0.2, 0.5, None, RngStream(2, 0)), 0.01, None)
        b = spde_step_2d(SpdeState(xi.copy(), 0.0, 0.2, 0.5, None, RngStream(2, 0)), 0.01, zero_spec)
        assert np.array_equal(a.field.coeffs, b.field.coeffs)

    def test_nu_zero_limit_is_heun(self, grid64, stream):
        # semigroup -> identity, noise variance -> 0: plain two-stage step
        from tflab.operators import advection_2d_raw
        xi = random_vorticity(grid64, stream, peak=6, scale=1.0)
        h = 1e-3
        out = spde_step_2d(SpdeState(xi.copy(), 0.0, 0.0, 0.5, None, RngStream(3, 0)), h, None)
        t1, _ = advection_2d_raw(xi.coeffs, grid64)
        pred = xi.coeffs - h * t1
        t2, _ = advection_2d_raw(pred, grid64)
        heun = pred - 0.5 * h * (t2 - t1)
        assert np.max(np.abs(out.field.coeffs - heun)) < 1e-15

    def test_linear_only_long_run_average(self):
        # time average of |u|^2_{H^{1+delta}} matches the exact OU target
        g = make_grid(2, 32)
        spec = make_spectrum(g, "shell", radius=1)
        stream = RngStream(21, 0)
        state = SpdeState(sample_stationary_linear(spec, 0.5, stream), 0.0, 0.5, 0.5, None, stream)
        vals = []
        for _ in range(6000):
            state = spde_step_2d(state, 0.5, spec, nonlinear=False)
            vals.append(sobolev_norm_sq(biot_savart(state.field), SobolevIndex(1.5)))
        target = spec.b_constant(0) / 2.0
        se = np.std(vals, ddof=1) / math.sqrt(len(vals) / 12.0)  # ~decorrelation margin
        assert abs(np.mean(vals) - target) <= 3.0 * se

    def test_3d_spde_steps_and_invariants(self):
        g = make_grid(3, 16)
        spec = make_spectrum(g, "shell", radius=1)
        stream = RngStream(22, 0)
        field = sample_stationary_linear(spec, 0.5, stream, radius=4)
        state = SpdeState(field, 0.0, 0.5, 0.5, 4, stream)
        for _ in range(10):
            state = spde_step_3d(state, 0.05, spec)
        state.field.check_invariants(tol=1e-10)


class TestCfl:
    def test_zero_field_gives_h_max(self, grid64):
        ctrl = StepControl(c_cfl=0.5, h_max=0.03)
        assert cfl_dt(VorticityField2D.zero(grid64), ctrl) == 0.03

    def test_sin_velocity_formula(self, grid64):
        u = VelocityField.zero(grid64)
        u.coeffs[1, 1, 0] = -0.5j
        u.coeffs[1, -1, 0] = 0.5j
        ctrl = StepControl(c_cfl=0.5, h_max=10.0)
        expect = 0.5 * (2 * math.pi / 64) / 1.0
        assert abs(cfl_dt(u, ctrl) - expect) < 1e-12

    def test_resolution_halves_dt(self, stream):
        ctrl = StepControl(c_cfl=0.5, h_max=10.0)
        xi32 = random_vorticity(make_grid(2, 32), stream, peak=4, scale=1.0)
        g64 = make_grid(2, 64)
        fine = VorticityField2D.zero(g64)
        for (n1, n2), flat in zip(xi32.grid.mode_list, xi32.grid.mode_flat):
            fine.coeffs[n1 % 64, n2 % 64] = xi32.coeffs.ravel()[flat]
        r = cfl_dt(xi32, ctrl) / cfl_dt(fine, ctrl)
        assert abs(r - 2.0) < 0.05

    def test_fixed_override(self, grid64, stream):
        xi = random_vorticity(grid64, stream, peak=4)
        assert cfl_dt(xi, StepControl(fixed_dt=0.007)) == 0.007


class TestIntegrate:
    def test_identity_when_t_end_equals_start(self, grid64, stream):
        xi = random_vorticity(grid64, stream, peak=4)
        state = SpdeState(xi.copy(), 0.0, 0.0, 0.5, None, RngStream(0, 0))
        out = integrate(state, 0.0, StepControl())
        assert np.array_equal(out.field.coeffs, xi.coeffs)

    def test_observer_callback_count(self, grid64, stream):
        xi = random_vorticity(grid64, stream, peak=4, scale=0.5)
        calls = []
        obs = Observer(0.25, lambda s: calls.append(s.t))
        state = SpdeState(xi, 0.0, 0.0, 0.5, None, RngStream(0, 0))
        integrate(state, 1.0, StepControl(c_cfl=0.5), (obs,))
        assert len(calls) == math.floor(1.0 / 0.25) + 1
        assert calls[0] == 0.0 and abs(calls[-1] - 1.0) < 1e-12

    def test_checkpoint_resume_bit_exact(self, tmp_path):
        g = make_grid(2, 32)
        spec = make_spectrum(g, "annulus", k=3, alpha=1.0)
        stream = RngStream(77, 5)
        state = SpdeState(sample_stationary_linear(spec, 0.5, stream), 0.0, 0.05, 0.5, None, stream)
        ctrl = StepControl(fixed_dt=0.01)
        mid = integrate(state.copy(), 0.2, ctrl, (), spec)
        save_checkpoint(mid, tmp_path / "mid.tflab")
        counter_at_mid = mid.stream.counter
        full = integrate(mid, 0.4, ctrl, (), spec)
        resumed = load_checkpoint(tmp_path / "mid.tflab")
        assert resumed.stream.identity() == (77, 5, counter_at_mid)
        redone = integrate(resumed, 0.4, ctrl, (), spec)
        assert np.array_equal(full.field.coeffs, redone.field.coeffs)
        assert full.stream.counter == redone.stream.counter
        assert np.array_equal(full.stream.copy().normals(8), redone.stream.copy().normals(8))


class TestDoublingTime:
    def test_stationary_data_never_doubles(self, grid64):
        td = doubling_time(sin_sin(grid64), 2.0, StepControl(c_cfl=0.5), horizon=2.0)
        assert td == math.inf

    def test_euler_rescaling(self, grid64):
        t1 = doubling_time(shear_data(grid64, 1.0), 2.0, StepControl(c_cfl=0.5), horizon=60.0)
        t2 = doubling_time(shear_data(grid64, 2.0), 2.0, StepControl(c_cfl=0.5), horizon=60.0)
        assert math.isfinite(t1) and math.isfinite(t2)
        assert abs(t2 - t1 / 2.0) < 0.05 * t1

    def test_zero_data_rejected(self, grid64):
        with pytest.raises(ValueError):
            doubling_time(VorticityField2D.zero(grid64), 2.0)


class TestCheckpointFormat:
    def test_roundtrip_2d(self, grid32, stream, tmp_path):
        xi = random_vorticity(grid32, stream, peak=5, scale=1.2)
        st = SpdeState(xi, 3.25, 1e-3, 0.5, None, RngStream(9, 2, 41))
        save_checkpoint(st, tmp_path / "a.tflab")
        back = load_checkpoint(tmp_path / "a.tflab")
        assert np.array_equal(back.field.coeffs, xi.coeffs)
        assert (back.t, back.nu, back.delta) == (3.25, 1e-3, 0.5)
        assert back.stream.identity() == (9, 2, 41)

    def test_roundtrip_3d(self, grid3d, stream, tmp_path):
        u = galerkin_project(random_velocity(grid3d, stream, peak=3), 6)
        st = SpdeState(u, 1.0, 0.1, 1.6, 6, RngStream(1, 0, 7))
        save_checkpoint(st, tmp_path / "b.tflab")
        back = load_checkpoint(tmp_path / "b.tflab")
        assert np.array_equal(back.field.coeffs, u.coeffs)
        assert back.galerkin_n == 6

    def test_truncated_file(self, grid32, stream, tmp_path):
        xi = random_vorticity(grid32, stream, peak=5)
        st = SpdeState(xi, 0.0, 0.0, 0.5, None, RngStream(0, 0))
        p = tmp_path / "c.tflab"
        save_checkpoint(st, p)
        data = p.read_bytes()
        p.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_bad_magic_and_version(self, grid32, stream, tmp_path):
        xi = random_vorticity(grid32, stream, peak=5)
        st = SpdeState(xi, 0.0, 0.0, 0.5, None, RngStream(0, 0))
        p = tmp_path / "d.tflab"
        save_checkpoint(st, p)
        raw = bytearray(p.read_bytes())
        raw[0:5] = b"WRONG"
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(p)
        raw = bytearray((tmp_path / "d.tflab").read_bytes())
        save_checkpoint(st, p)
        raw = bytearray(p.read_bytes())
        raw[5] = 99  # version field
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(p)
