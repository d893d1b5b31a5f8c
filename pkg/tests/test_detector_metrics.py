import math

import numpy as np
import pytest

from core_model import ProbeSpec
from detector_metrics import (
    DurationDistribution,
    ProbePhases,
    dead_time,
    detection_band,
    efficiency_eta1,
    efficiency_eta2,
    eta1_closed_form,
    optimal_pulse_length,
    probe_phases,
    q_of_tau,
    q_step,
    quadrature_means,
    quadrature_snr,
    readout_model,
    reflection_phase,
    snr_fidelity,
    trajectory_efficiency,
    zeno_time,
)
from lindblad_dynamics import Trajectory
from simulation_errors import QuadratureError, ThresholdError

EXACT_PHASES = ProbePhases.from_units((3 + 4j) / 5, -1 + 0j, 46.0)


def test_probe_phase_convention(dp):
    matched = dp.with_rates(kappa_b=2 * dp.chi_b)
    phases = probe_phases(matched, matched.operating_probe_frequency())
    assert phases.unit_g == pytest.approx((3 + 4j) / 5, abs=1e-9)
    assert phases.unit_e == pytest.approx(-1.0, abs=1e-9)
    assert reflection_phase(1.0, 0.0) == pytest.approx(math.pi)


def test_probe_phases_at_reference_linewidth(dp, probe):
    phases = probe_phases(dp, probe.omega_p)
    assert phases.unit_g == pytest.approx((3 + 4j) / 5, abs=0.01)
    assert phases.unit_e == pytest.approx(-1.0, abs=1e-9)


@pytest.mark.parametrize("Delta_t, snr, fidelity", [(575.0, 2.58, 0.990), (939.0, 3.29, 0.999)])
def test_snr_and_fidelity(probe, Delta_t, snr, fidelity):
    values = snr_fidelity(probe, EXACT_PHASES, Delta_t)
    assert values["SNR"] == pytest.approx(snr, abs=0.01)
    assert values["F"] == pytest.approx(fidelity, abs=1e-3)


def test_quadrature_form_agrees(probe, dp):
    phases = probe_phases(dp, probe.omega_p)
    for Delta_t in (10.0, 300.0, 939.0):
        assert quadrature_snr(probe, phases, Delta_t) == pytest.approx(
            snr_fidelity(probe, phases, Delta_t)["SNR"], abs=1e-12)
    means = quadrature_means(probe, phases, 575.0)
    assert means["g"] == pytest.approx(-means["e"])


def test_probe_off_gives_no_information(probe):
    readout = readout_model(probe.with_power(0.0), EXACT_PHASES, 575.0)
    assert readout.SNR == 0.0 and readout.F == 0.0
    assert efficiency_eta1(0.9, readout.F) == pytest.approx(0.5)


def test_eta1_limits():
    assert efficiency_eta1(1.0, 1.0) == pytest.approx(1.0)
    assert efficiency_eta1(0.0, 0.9) == pytest.approx(0.05)
    assert eta1_closed_form(0.0, 3.0, 500.0) == pytest.approx(0.5 * (1 + math.erf(3.0 / math.sqrt(2))))


def test_decision_probability():
    F = math.erf(2.0 / math.sqrt(2))
    q = q_of_tau(2.0, 600.0, [0.0, 300.0, 600.0, 2000.0])
    assert q == pytest.approx([0.5 * (1 - F), 0.5, 0.5 * (1 + F), 0.5 * (1 + F)])
    assert q_step(2.0, 600.0, [299.0, 301.0]) == pytest.approx([0.5 * (1 - F), 0.5 * (1 + F)])


def test_exponential_distribution():
    Q = DurationDistribution.exponential(1.0 / 6.0)
    Q.validate()
    assert Q.total() == 1.0
    assert Q.survival(0.0) == pytest.approx(1.0)
    assert Q.survival(6000.0) == pytest.approx(math.exp(-1.0))


def test_unnormalized_distribution_rejected():
    tau = np.linspace(0.0, 10.0, 11)
    with pytest.raises(QuadratureError):
        DurationDistribution(tau=tau, density=np.ones_like(tau)).validate()


def test_eta2_short_window_is_half(probe, dp):
    readout = readout_model(probe, probe_phases(dp, probe.omega_p), 0.0)
    assert efficiency_eta2(DurationDistribution.exponential(1.0 / 6.0), readout) == pytest.approx(0.5)


@pytest.mark.parametrize("Delta_t", [50.0, 300.0, 575.0, 1000.0])
def test_eta1_eta2_agreement(probe, dp, Delta_t):
    Gamma = 1.0 / 6.0
    x = Gamma * Delta_t / 1e3
    readout = readout_model(probe, probe_phases(dp, probe.omega_p), Delta_t)
    Q = DurationDistribution.exponential(Gamma)
    eta1 = eta1_closed_form(Gamma, readout.SNR, Delta_t)
    eta2 = efficiency_eta2(Q, readout)
    assert 0.0 <= eta1 - eta2 <= x ** 2 / 20
    assert abs(efficiency_eta2(Q, readout, step=True) - eta2) <= readout.F * x ** 2 / 8


def test_efficiency_peaks_then_declines(probe, dp):
    phases = probe_phases(dp, probe.omega_p)
    Q = DurationDistribution.exponential(1.0 / 6.0)
    grid = np.linspace(50.0, 20000.0, 80)
    eta2 = [efficiency_eta2(Q, readout_model(probe, phases, Dt)) for Dt in grid]
    peak = int(np.argmax(eta2))
    assert 0 < peak < len(grid) - 1


def _decaying_trajectory(p_max=0.9, lifetime=1000.0):
    t = np.arange(0.0, 8000.0 + 0.5, 1.0)
    p_e = p_max * np.exp(-t / lifetime)
    zeros = np.zeros_like(t)
    return Trajectory(t=t, p_e=p_e, n_a=zeros, n_b=zeros)


def test_distribution_from_trajectory():
    Q, p_max = DurationDistribution.from_trajectory(_decaying_trajectory())
    assert p_max == pytest.approx(0.9)
    Q.validate()
    assert Q.survival(1000.0) == pytest.approx(math.exp(-1.0), abs=5e-3)


def test_trajectory_without_excitation_rejected():
    traj = _decaying_trajectory(p_max=0.0)
    with pytest.raises(QuadratureError):
        DurationDistribution.from_trajectory(traj)


def test_trajectory_efficiency_bounds(probe, dp):
    readout = readout_model(probe, probe_phases(dp, probe.omega_p), 575.0)
    result = trajectory_efficiency(_decaying_trajectory(), readout)
    assert result.within_bounds()
    assert result.eta2 is not None
    assert result.eta2 <= result.eta1 + 0.01


def _lorentzian_band(center=10.05, half_width=0.005):
    x = np.linspace(10.0, 10.1, 2001)
    return x, 0.5 + 0.45 / (1 + ((x - center) / half_width) ** 2)


def test_detection_band_widths():
    x, eta = _lorentzian_band()
    band = detection_band(x, eta)
    assert band.center == pytest.approx(10.05)
    assert band.peak_eta == pytest.approx(0.95)
    assert band.widths[0.9] == pytest.approx(2 * 5.0 * math.sqrt(0.125), abs=0.01)
    assert band.widths[0.8] == pytest.approx(2 * 5.0 * math.sqrt(0.5), abs=0.01)
    assert band.peaks == pytest.approx([10.05])


def test_detection_band_errors():
    x, eta = _lorentzian_band()
    with pytest.raises(ThresholdError):
        detection_band(x, eta, thresholds=(0.96,))
    with pytest.raises(ThresholdError):
        detection_band(x[:1001], eta[:1001])
    with pytest.raises(ValueError):
        detection_band(x[::-1], eta[::-1])


def test_optimal_pulse_length_refines_vertex():
    lengths = [60.0, 80.0, 100.0, 120.0]
    eta = [0.9 - 1e-5 * (length - 90.0) ** 2 for length in lengths]
    best = optimal_pulse_length(lengths, eta)
    assert best["refined"]
    assert best["length_ns"] == pytest.approx(90.0)
    assert best["eta"] == pytest.approx(0.9)


def test_dead_time():
    assert dead_time(0.5) == pytest.approx(2.0)
    assert dead_time(0.0) == math.inf


def test_zeno_time():
    estimate = zeno_time(ProbeSpec(omega_p=11.977, n_b_mean=0.05), 46.0)
    assert estimate.angular_ns == pytest.approx(69.2, abs=0.1)
    assert estimate.linear_ns == pytest.approx(434.8, abs=0.1)
    with pytest.raises(ValueError):
        zeno_time(ProbeSpec(omega_p=11.977, n_b_mean=0.0), 46.0)
