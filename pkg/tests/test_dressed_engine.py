import math

import numpy as np
import pytest

from core_model import DriveSpec, angular
from dressed_engine import (
    MANIFOLD_STATES,
    FrameSpec,
    build_hamiltonian,
    captured_projector,
    closed_form_gaps,
    closed_form_impedance_match,
    closed_form_theta,
    decay_table,
    diagonalize_dressed,
    dressed_at,
    dressed_rates_row,
    excited_projector,
    find_impedance_match,
    transition_frequencies,
)
from simulation_errors import BracketError, FrameError, NestingWindowError


def test_hamiltonian_elements(dp):
    H = build_hamiltonian(dp, DriveSpec(omega_d=4.832, Omega_d=10.0))
    assert H.is_hermitian()
    assert H.element((0, 0, 0), (0, 0, 0)) == 0.0
    assert H.element((1, 0, 0), (1, 0, 0)).real == pytest.approx(angular(95.142857, "MHz"), rel=1e-6)
    assert H.element((1, 0, 0), (0, 0, 0)) == pytest.approx(angular(10.0, "MHz"))


def test_frame_consistency(dp):
    with pytest.raises(FrameError):
        build_hamiltonian(dp, DriveSpec(omega_d=4.832), FrameSpec(qubit=4.84))
    with pytest.raises(FrameError):
        FrameSpec.from_rotations({"qubit": 4.832, "c": 1.0})
    with pytest.raises(FrameError):
        FrameSpec(qubit=4.832, a=10.05).merge("a", 10.1)
    assert FrameSpec(qubit=4.832).merge("b", 11.9).b == 11.9


def test_labels_without_drive(dp, idle_drive):
    spec = diagonalize_dressed(build_hamiltonian(dp, idle_drive))
    assert spec.dominant == [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1)]
    assert all(value == pytest.approx(1.0) for value in spec.cos2().values())
    assert np.all(np.diff(spec.energies) > 0)


def test_transition_frequencies_without_drive(dp, idle_drive):
    lines = transition_frequencies(diagonalize_dressed(build_hamiltonian(dp, idle_drive)))
    assert lines["omega_41"] == pytest.approx(dp.omega_a)
    assert lines["omega_31"] == pytest.approx(dp.omega_a - 2 * dp.chi_a / 1e3 + (dp.omega_q - 4.832))
    assert lines["omega_21"] == pytest.approx(dp.omega_q - 4.832)
    assert lines["omega_51"] == pytest.approx(dp.omega_b)


@pytest.mark.parametrize("Omega_d", [0.0, 5.0, 10.75, 25.0])
def test_mixing_angles_match_closed_form(dp, Omega_d):
    spec = dressed_at(dp, 4.832, Omega_d)
    gaps = closed_form_gaps(dp, 4.832)
    for name, value in spec.cos2().items():
        assert value == pytest.approx(math.cos(closed_form_theta(Omega_d, gaps[name])) ** 2, abs=1e-9)


def test_mixing_angles_at_match(dp, Omega_imp):
    cos2 = dressed_at(dp, 4.832, Omega_imp).cos2()
    assert cos2["theta_12"] == pytest.approx(0.99, abs=0.02)
    assert cos2["theta_34"] == pytest.approx(0.61, abs=0.02)
    assert cos2["theta_56"] == pytest.approx(0.96, abs=0.02)


def test_decay_table_without_drive(dp):
    rates = decay_table(dressed_at(dp, 4.832, 0.0), dp).normalized()
    for key in ("ka41", "ka32", "kb51", "kb62"):
        assert rates[key] == pytest.approx(1.0)
    for key in ("ka31", "ka42", "kb52", "kb61"):
        assert rates[key] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("Omega_d", np.linspace(0.0, 30.0, 7))
def test_decay_identities(dp, Omega_d):
    table = decay_table(dressed_at(dp, 4.832, float(Omega_d)), dp)
    assert max(table.identity_residuals().values()) < 1e-9


@pytest.mark.parametrize("omega_d, expected, tolerance",
                         [(4.832, 10.75, 0.2), (4.841, 17.27, 0.3), (4.850, 21.00, 0.3)])
def test_impedance_match(dp, omega_d, expected, tolerance):
    found = find_impedance_match(dp, omega_d)
    assert found == pytest.approx(expected, abs=tolerance)
    assert found == pytest.approx(closed_form_impedance_match(dp, omega_d), abs=5e-3)


def test_impedance_match_balances_rates(dp, Omega_imp):
    table = decay_table(dressed_at(dp, 4.832, Omega_imp), dp)
    assert abs(table.rate("a", 3, 1) - table.rate("a", 3, 2)) / dp.kappa_a_rad < 1e-3
    assert table.normalized()["kb52"] == pytest.approx(0.009, abs=0.002)


@pytest.mark.parametrize("omega_d", [4.832, 4.841])
def test_impedance_match_angle_sum(dp, omega_d):
    spec = dressed_at(dp, omega_d, find_impedance_match(dp, omega_d))
    assert spec.theta_12 + spec.theta_34 == pytest.approx(math.pi / 4, abs=1e-3)


def test_impedance_match_errors(dp):
    with pytest.raises(BracketError):
        find_impedance_match(dp, 4.832, bracket=(0.1, 1.0))
    with pytest.raises(NestingWindowError):
        find_impedance_match(dp, 4.95)


def test_excited_projector(small_dp, drive):
    H = build_hamiltonian(small_dp, drive)
    P = excited_projector(H)
    assert np.allclose(P, P.conj().T)
    assert np.allclose(P @ P, P)
    assert np.trace(P).real == pytest.approx(9.0)
    spec = diagonalize_dressed(H)
    assert np.vdot(spec.state(2), P @ spec.state(2)).real == pytest.approx(1.0)
    assert np.vdot(spec.state(1), P @ spec.state(1)).real == pytest.approx(0.0, abs=1e-12)


def test_excited_projector_without_drive(small_dp, idle_drive):
    H = build_hamiltonian(small_dp, idle_drive)
    assert np.allclose(excited_projector(H), H.ops.proj_e)


def test_captured_projector_skips_photon_in_a(small_dp, drive):
    H = build_hamiltonian(small_dp, drive)
    P = captured_projector(H)
    assert np.allclose(P, P.conj().T)
    assert np.allclose(P @ P, P)
    # по одному состоянию на каждое n_b при n_a = 0
    assert np.trace(P).real == pytest.approx(3.0)
    assert np.allclose(P, excited_projector(H, max_n_a=0))
    spec = diagonalize_dressed(H)
    assert spec.dominant[2] == (1, 1, 0)
    for label, expected in [(1, 0.0), (2, 1.0), (3, 0.0), (4, 0.0), (5, 0.0), (6, 1.0)]:
        assert np.vdot(spec.state(label), P @ spec.state(label)).real == pytest.approx(expected, abs=1e-10)


def test_dressed_rates_row(dp):
    row = dressed_rates_row(dp, 4.832, 10.0)
    assert row["Omega_d_MHz"] == 10.0
    assert {k for k in row if k.startswith("k")} == {
        "ka31", "ka32", "ka41", "ka42", "kb51", "kb52", "kb61", "kb62"}


def test_manifold_covers_one_excitation():
    assert len(MANIFOLD_STATES) == 6
    assert all(n_a + n_b <= 1 for _, n_a, n_b in MANIFOLD_STATES)
