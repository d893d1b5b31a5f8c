import math

import numpy as np
import pytest
from pydantic import ValidationError

from core_model import DriveSpec, angular, operating_probe
from lindblad_dynamics import (
    CoherentDrive,
    PulseSpec,
    RK4Stepper,
    Trajectory,
    build_liouvillian,
    capture_tracking,
    dark_count_rate,
    default_signal_amplitude,
    dressed_density,
    dynamics_frame,
    empty_cavity_reflection,
    evolve_density,
    evolve_single_photon,
    excited_lifetime,
    lambda_group_delay,
    moving_average,
    reflection_coefficient,
    reflection_map,
    spost,
    spre,
    steady_state,
    trace_distance,
    transpose_permutation,
    unvectorize,
    vectorize,
)
from simulation_errors import ConfigError, FrameError, WeakDriveError


def _random_matrix(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_superoperator_conventions():
    rng = np.random.default_rng(7)
    A, B, rho = (_random_matrix(rng, 4) for _ in range(3))
    assert np.allclose(unvectorize(spre(A) @ vectorize(rho), 4), A @ rho)
    assert np.allclose(unvectorize(spost(B) @ vectorize(rho), 4), rho @ B)
    perm = transpose_permutation(4)
    assert np.allclose(vectorize(rho)[perm], vectorize(rho.T))


def test_generator_preserves_trace(small_dp, drive):
    L = build_liouvillian(small_dp, drive, [], dynamics_frame(small_dp, drive))
    identity = vectorize(np.eye(L.dim))
    assert np.abs(identity @ L.superop).max() < 1e-10


def test_steady_state_without_drives(small_dp, idle_drive):
    L = build_liouvillian(small_dp, idle_drive)
    rho = steady_state(L)
    ground = np.zeros_like(rho)
    ground[0, 0] = 1.0
    assert np.trace(rho).real == pytest.approx(1.0)
    assert trace_distance(rho, ground) < 1e-8


def test_steady_state_is_physical(small_dp, drive, probe):
    probe_field = CoherentDrive(target="b", alpha=probe.amplitude(small_dp.kappa_b), frequency=probe.omega_p)
    L = build_liouvillian(small_dp, drive, [probe_field], dynamics_frame(small_dp, drive))
    rho = steady_state(L)
    assert np.allclose(rho, rho.conj().T)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho).min() > -1e-9


def test_coherent_drive_target():
    with pytest.raises(ConfigError):
        CoherentDrive(target="q", alpha=0.1, frequency=10.0)


def test_inconsistent_drive_frame(small_dp, drive):
    signal = CoherentDrive(target="a", alpha=0.01, frequency=10.1)
    with pytest.raises(FrameError):
        build_liouvillian(small_dp, drive, [signal], dynamics_frame(small_dp, drive, omega_s=10.05))


def test_empty_cavity_reflection_convention():
    kappa = 0.3
    assert empty_cavity_reflection(kappa, 0.0) == pytest.approx(-1.0)
    assert empty_cavity_reflection(kappa, kappa) == pytest.approx((3 + 4j) / 5, abs=1e-12)
    for detuning in (-2.0, 0.05, 7.0):
        assert abs(empty_cavity_reflection(kappa, detuning)) == pytest.approx(1.0)


@pytest.mark.parametrize("omega_s", [10.02, 10.05, 10.1])
def test_reflection_without_drive_is_empty_cavity(small_dp, idle_drive, omega_s):
    r = reflection_coefficient(small_dp, idle_drive, omega_s)
    expected = empty_cavity_reflection(small_dp.kappa_a_rad, angular(small_dp.omega_a - omega_s))
    assert r == pytest.approx(expected, abs=1e-6)


def test_reflection_at_impedance_match(small_dp, drive):
    assert abs(reflection_coefficient(small_dp, drive, 10.05)) < 0.1
    assert abs(reflection_coefficient(small_dp, drive, 10.2)) > 0.98


@pytest.mark.parametrize("omega_s", [10.04, 10.05, 10.07])
def test_reflection_is_linear_in_signal(small_dp, drive, omega_s):
    alpha = default_signal_amplitude(small_dp)
    full = reflection_coefficient(small_dp, drive, omega_s, alpha_in=alpha)
    half = reflection_coefficient(small_dp, drive, omega_s, alpha_in=0.5 * alpha)
    assert half == pytest.approx(full, abs=5e-3)


@pytest.mark.slow
def test_reflection_map_minimum_near_match(small_dp, drive):
    grid = reflection_map(small_dp, drive.omega_d, np.arange(0.0, 25.5, 1.0), np.linspace(10.03, 10.07, 9))
    best = grid.loc[grid["abs_r"].idxmin()]
    assert abs(best["Omega_d_MHz"] - drive.Omega_d) <= 1.0
    assert best["abs_r"] < 0.1


def test_strong_signal_rejected(small_dp, drive):
    with pytest.raises(WeakDriveError):
        reflection_coefficient(small_dp, drive, 10.05, alpha_in=1.0)


def test_pulse_normalization():
    pulse = PulseSpec(omega_s=10.05, length=100.0)
    assert pulse.norm_on_grid(0.1) == pytest.approx(1.0, abs=1e-6)
    assert pulse.delivered(0.0) == pytest.approx(0.5)
    assert pulse.delivered(pulse.end) == pytest.approx(1.0, abs=1e-9)
    assert (pulse.start, pulse.end) == (-300.0, 300.0)
    half = PulseSpec(omega_s=10.05, length=100.0, amplitude=0.5)
    assert half.norm_on_grid(0.1) == pytest.approx(0.25, abs=1e-6)


def test_pulse_validation():
    with pytest.raises(ValidationError):
        PulseSpec(omega_s=10.05, length=100.0, amplitude=1.5)
    with pytest.raises(ValidationError):
        PulseSpec(omega_s=10.05, length=100.0, t0=50.0, t1=10.0)


def test_rk4_exponential_decay():
    recorded = []
    stepper = RK4Stepper(lambda t, y: -y, 0.01)
    final = stepper.run(np.array([1.0]), 0.0, 1.0, 0.1, lambda t, y: recorded.append(t))
    assert final[0] == pytest.approx(math.exp(-1.0), abs=1e-9)
    assert len(recorded) == 11
    assert recorded[-1] == pytest.approx(1.0)


def test_evolve_density_relaxes_to_steady_state(small_dp):
    idle = DriveSpec(omega_d=4.832, Omega_d=0.0)
    L = build_liouvillian(small_dp, idle, [], dynamics_frame(small_dp, idle))
    traj, final = evolve_density(L, dressed_density(small_dp, idle, 4), 0.0, 400.0, 0.1, 10.0)
    assert traj.n_a[0] == pytest.approx(1.0)
    assert traj.n_a[-1] < 1e-10
    assert traj.meta["max_trace_error"] < 1e-10
    assert trace_distance(final, steady_state(L)) < 1e-6


def _trajectory(t, p_e):
    zeros = np.zeros_like(t)
    return Trajectory(t=t, p_e=p_e, n_a=zeros, n_b=zeros)


def test_moving_average_of_constant():
    t = np.arange(0.0, 1000.0 + 0.5, 1.0)
    averaged = moving_average(_trajectory(t, np.full_like(t, 0.4)), 100.0)
    assert np.all(np.isnan(averaged.pbar_e[:100]))
    assert np.allclose(averaged.pbar_e[100:], 0.4)
    assert averaged.pbar_max == pytest.approx(0.4)
    assert averaged.t_m == pytest.approx(100.0)


def test_moving_average_of_exponential_decay():
    t = np.arange(0.0, 2000.0 + 0.5, 1.0)
    averaged = moving_average(_trajectory(t, np.exp(-t / 1000.0)), 100.0)
    assert averaged.t_m == pytest.approx(100.0)
    assert averaged.pbar_max == pytest.approx(10.0 * (1.0 - math.exp(-0.1)), rel=1e-5)
    assert averaged.pbar_max == pytest.approx(math.exp(-0.05), abs=1e-3)


def test_moving_average_window_limits():
    t = np.arange(0.0, 100.0 + 0.5, 1.0)
    traj = _trajectory(t, np.zeros_like(t))
    with pytest.raises(ConfigError):
        moving_average(traj, 0.2)
    with pytest.raises(ConfigError):
        moving_average(traj, 500.0)


def test_capture_tracking_of_ideal_response():
    pulse = PulseSpec(omega_s=10.05, length=100.0)
    t = np.arange(-300.0, 600.0, 1.0)
    traj = _trajectory(t, pulse.delivered(t - 15.0))
    assert capture_tracking(traj, pulse, 15.0) < 1e-12
    assert capture_tracking(traj, pulse, 0.0) > 0.05


def test_lambda_group_delay_near_cavity_delay(dp, drive):
    delay = lambda_group_delay(dp, drive)
    assert 0.5 * 2.0 / dp.kappa_a_rad < delay <= 2.0 / dp.kappa_a_rad


def test_time_step_must_resolve_pulse(small_dp, drive):
    with pytest.raises(ConfigError):
        evolve_single_photon(small_dp, drive, None, PulseSpec(omega_s=10.05, length=100.0), 600.0, dt=1.0)


@pytest.mark.slow
def test_single_photon_capture(small_dp, drive):
    pulse = PulseSpec(omega_s=10.05, length=100.0)
    traj = evolve_single_photon(small_dp, drive, None, pulse, 600.0, dt=0.1, record_dt=1.0, verify=False)
    assert traj.max_p_e > 0.9
    assert capture_tracking(traj, pulse, lambda_group_delay(small_dp, drive)) <= 0.05
    assert traj.meta["trace_00"] < 1e-8
    assert traj.meta["trace_11"] < 1e-8
    assert traj.meta["hermiticity"] < 1e-10
    assert traj.meta["min_population"] > -1e-8


@pytest.mark.slow
def test_averaged_peak_with_probe_on(small_dp, drive):
    pulse = PulseSpec(omega_s=10.05, length=100.0)
    probe = operating_probe(small_dp, 0.05)
    traj = evolve_single_photon(small_dp, drive, probe, pulse, 1100.0, dt=0.1, record_dt=1.0, verify=False)
    drops = []
    for Delta_t in (575.0, 939.0):
        averaged = moving_average(traj, Delta_t)
        assert averaged.pbar_max <= traj.max_p_e
        drops.append((traj.max_p_e - averaged.pbar_max) / traj.max_p_e)
    assert drops[1] > drops[0]
    assert drops[1] <= 0.15


@pytest.mark.slow
def test_dark_counts_scale_with_probe_power(small_dp, drive):
    results = [dark_count_rate(small_dp, drive, operating_probe(small_dp, n_b)) for n_b in (0.025, 0.05, 0.1)]
    assert results[1].rate / results[0].rate == pytest.approx(2.0, rel=0.15)
    assert results[2].rate / results[1].rate == pytest.approx(2.0, rel=0.15)
    for result in results[1:]:
        assert result.per_photon == pytest.approx(results[0].per_photon, rel=0.15)


@pytest.mark.slow
def test_zero_amplitude_pulse_stays_dark(small_dp, drive):
    pulse = PulseSpec(omega_s=10.05, length=100.0, amplitude=0.0)
    traj = evolve_single_photon(small_dp, drive, None, pulse, 300.0, dt=0.1, verify=False)
    assert traj.max_p_e < 1e-3


@pytest.mark.slow
def test_probe_off_lifetime_follows_gamma(small_dp, drive):
    result = excited_lifetime(small_dp, drive, None)
    gamma_per_us = small_dp.gamma_rad * 1e3
    assert result.Gamma == pytest.approx(gamma_per_us, rel=0.05)
    assert result.residual < 0.05
