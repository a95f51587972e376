import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionbell import dynamics as dyn
from ionbell.crystal import MotionalMode

DG = 1 / 13.7e-6
MODE = MotionalMode(2.0e6, 0.6811, math.sqrt(1 - 0.6811**2), 0.121, 0.126)


def _drive(**kw):
    return dyn.DriveConfig(MODE.frequency + DG, DG, **kw)


def test_square_closed_loop():
    tr = dyn.displacement_trajectory(_drive(), dyn.Envelope(1 / DG), 2.0e4)
    assert abs(tr.final_displacement) < 1e-9
    assert tr.geometric_phase == pytest.approx(2 * math.pi * (2.0e4 / DG) ** 2, rel=1e-6)


def test_half_loop_reaches_antipode():
    c = 2.0e4
    tr = dyn.displacement_trajectory(_drive(), dyn.Envelope(0.5 / DG), c)
    assert abs(tr.final_displacement) == pytest.approx(2 * c / DG, rel=1e-9)


@pytest.mark.parametrize("frac", [0.3, 0.77, 1.6])
def test_open_loop_matches_closed_form(frac):
    c = 1.5e4
    tr = dyn.displacement_trajectory(_drive(), dyn.Envelope(frac / DG), c)
    final, area = dyn.square_loop(c, DG, frac / DG)
    assert tr.final_displacement == pytest.approx(final, abs=1e-10)
    assert tr.geometric_phase == pytest.approx(area, rel=1e-8)


def test_phase_equals_sampled_loop_integral():
    tr = dyn.displacement_trajectory(_drive(), dyn.Envelope(0.8 / DG), 1.0e4)
    a = tr.alpha_samples
    direct = np.sum(np.imag(np.conj(0.5 * (a[1:] + a[:-1])) * np.diff(a)))
    assert tr.geometric_phase == pytest.approx(direct, rel=1e-5)


def test_undersampled_grid_rejected():
    with pytest.raises(dyn.SamplingError):
        dyn.displacement_trajectory(_drive(), dyn.Envelope(1 / DG), 1e4, samples_per_period=20)


def test_equal_forces_excite_only_antialigned_states():
    d = _drive(omega_a_up=1e5, omega_a_down=-1e5, omega_b_up=1e5, omega_b_down=-1e5)
    c = dyn.state_couplings(d, MODE.__class__(MODE.frequency, MODE.b_a, MODE.b_b, 0.12, 0.12), -1)
    assert c[0] == 0 and c[3] == 0
    assert abs(c[1]) == abs(c[2]) > 0
    c = dyn.state_couplings(d, MODE.__class__(MODE.frequency, MODE.b_a, MODE.b_b, 0.12, 0.12), 1)
    assert c[1] == 0 and c[2] == 0
    assert abs(c[0]) == abs(c[3]) > 0


def test_generic_forces_give_four_phases():
    d = _drive(omega_a_up=1e5, omega_a_down=-0.6e5, omega_b_up=0.3e5, omega_b_down=-0.9e5)
    h = dyn.gate_half_channel(d, dyn.Envelope(1 / DG), MODE, -1)
    assert len(set(np.round(h.phases, 9))) == 4


def test_equal_halves_give_doubled_phase():
    d = _drive(omega_a_up=1e5, omega_a_down=-1e5, omega_b_up=1e5, omega_b_down=-1e5)
    env = dyn.Envelope(1 / DG)
    h1 = dyn.gate_half_channel(d, env, MODE, -1)
    h2 = dyn.gate_half_channel(d, env, MODE, -1, t_start=1 / DG)
    g = dyn.compose_symmetrized_gate(h1, h2)
    rel = g.relative_phases()
    assert rel[3] == pytest.approx(0, abs=1e-12)
    assert rel[1] == pytest.approx(rel[2], abs=1e-12)
    assert rel[1] == pytest.approx(2 * (h1.phases[1] - h1.phases[0]), abs=1e-9)


def test_calibrated_half_phase_is_quarter_pi():
    d = _drive(omega_a_up=1e5, omega_a_down=-1e5, omega_b_up=1e5, omega_b_down=-1e5)
    env = dyn.Envelope(13.7e-6)
    d = dyn.calibrate_drive(d, env, MODE, -1)
    h = dyn.gate_half_channel(d, env, MODE, -1)
    # phi_du of one half relative to the unexcited aligned states
    assert h.phases[1] - h.phases[0] == pytest.approx(math.pi / 4, abs=1e-9)
    g = dyn.compose_symmetrized_gate(h, dyn.gate_half_channel(d, env, MODE, -1, t_start=13.7e-6))
    assert g.entangling_phase == pytest.approx(math.pi / 2, abs=1e-9)


def test_zero_drive_is_identity():
    env = dyn.Envelope(1 / DG)
    h = dyn.gate_half_channel(_drive(), env, MODE, -1)
    g = dyn.compose_symmetrized_gate(h, h)
    assert np.allclose(g.multipliers(), 1.0, atol=0, rtol=0)


def test_coherence_factors_formula():
    ch = dyn.GateChannel(np.zeros(4), np.array([0, 0.1, 0.2j, -0.05]), nbar=0.3)
    cf = ch.coherence_factors
    assert np.allclose(cf, cf.T)
    assert np.allclose(np.diag(cf), 1)
    assert cf[1, 2] == pytest.approx(math.exp(-abs(0.1 - 0.2j) ** 2 * 1.6 / 2))


def test_light_shift_zero_amplitude():
    r = dyn.light_shift_phase(_drive(), dyn.Envelope(13.7e-6))
    assert r.mean_error == 0


def test_light_shift_square_amplitude_closed_form():
    d = _drive(light_shift_a=3e5, light_shift_b=1e5)
    T, t0 = 13.7e-6, 2.1e-6
    za, zb = dyn.light_shift_amplitudes(d, dyn.Envelope(T), t_start=t0)
    delta = d.difference_frequency
    z = (np.exp(2j * math.pi * delta * (t0 + T)) - np.exp(2j * math.pi * delta * t0)) / (1j * delta)
    assert za == pytest.approx(3e5 * z, rel=1e-6)
    assert zb == pytest.approx(1e5 * z, rel=1e-6)
    fine, _ = dyn.light_shift_amplitudes(d, dyn.Envelope(T), t_start=t0, samples_per_period=2000)
    assert fine == pytest.approx(3e5 * z, rel=1e-11)


def test_light_shift_calibration_and_shaping():
    env = dyn.Envelope(13.7e-6)
    d = dyn.calibrate_light_shift(_drive(), env, 0.05)
    assert dyn.light_shift_phase(d, env).mean_error == pytest.approx(0.05, rel=1e-9)
    errs = [dyn.light_shift_phase(d, dyn.Envelope.with_area(13.7e-6, "shaped", r)).mean_error
            for r in np.linspace(0.05e-6, 1.2e-6, 12)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    shaped = dyn.light_shift_phase(d, dyn.Envelope.with_area(13.7e-6, "shaped", 1e-6)).mean_error
    assert 0.05 / shaped >= 10


def test_shaped_envelope_preserves_area_and_loop_closure():
    env = dyn.Envelope.with_area(1 / DG, "shaped", 1e-6)
    u = np.linspace(0, env.duration, 200001)
    assert np.trapezoid(env(u), u) == pytest.approx(1 / DG, rel=1e-8)
    tr = dyn.displacement_trajectory(_drive(), env, 2e4)
    assert abs(tr.final_displacement) < 1e-3 * 2e4 / DG


def test_envelope_validation():
    with pytest.raises(ValueError):
        dyn.Envelope(1e-6, "shaped", 0.6e-6)
    with pytest.raises(ValueError):
        dyn.Envelope(1e-6, "triangle")
    with pytest.raises(ValueError):
        dyn.DriveConfig(1e6, 0.0)


def test_thermal_weights_normalised():
    w = dyn.thermal_weights(0.5, 30)
    assert w.sum() == pytest.approx(1, abs=1e-15)
    assert w[1] / w[0] == pytest.approx(0.5 / 1.5)


def test_oracle_zero_coupling_identity():
    res = dyn.fock_oracle(_drive(), dyn.Envelope(1 / DG), MODE, -1, n_max=12)
    assert res.leakage == 0
    assert res.converged
    assert np.allclose(res.multipliers(), 1, atol=1e-14)


def test_oracle_matches_analytic_for_unclosed_loops():
    d = _drive(omega_a_up=1e5, omega_a_down=-0.9e5, omega_b_up=0.8e5, omega_b_down=-0.75e5)
    d = d.scaled(0.6)
    for frac in (0.35, 0.6):
        env = dyn.Envelope(frac / DG)
        ana = dyn.gate_half_channel(d, env, MODE, -1, nbar=0.1)
        orc = dyn.fock_oracle(d, env, MODE, -1, n_max=30, nbar=0.1)
        assert orc.converged
        assert np.max(np.abs(ana.multipliers() - orc.multipliers())) < 1e-8
        assert np.max(np.abs(np.abs(orc.multipliers()) - ana.coherence_factors)) < 1e-8


def test_oracle_flags_truncation_leakage():
    d = _drive(omega_a_up=8e5, omega_a_down=-8e5, omega_b_up=8e5, omega_b_down=-8e5)
    res = dyn.fock_oracle(d, dyn.Envelope(0.5 / DG), MODE, -1, n_max=10)
    assert res.leakage > dyn.LEAKAGE_LIMIT
    assert not res.converged


def test_oracle_rejects_small_basis():
    with pytest.raises(ValueError):
        dyn.fock_oracle(_drive(), dyn.Envelope(1 / DG), MODE, -1, n_max=5)


def test_full_coupling_model_close_to_lamb_dicke():
    d = _drive(omega_a_up=1e5, omega_a_down=-1e5, omega_b_up=1e5, omega_b_down=-1e5).scaled(0.5)
    env = dyn.Envelope(1 / DG)
    ld = dyn.fock_oracle(d, env, MODE, -1, n_max=20)
    full = dyn.fock_oracle(d, env, MODE, -1, n_max=20, coupling_model="full")
    diff = np.max(np.abs(ld.multipliers() - full.multipliers()))
    assert 0 < diff < 0.1


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.floats(-2e5, 2e5), min_size=4, max_size=4),
       st.floats(0, 2 * math.pi), st.sampled_from([-1, 1]))
def test_symmetrised_phases_have_gate_structure(om, phi, sign):
    d = dyn.DriveConfig(MODE.frequency + DG, DG, *om, optical_phase=phi)
    env = dyn.Envelope(1 / DG)
    h1 = dyn.gate_half_channel(d, env, MODE, sign, samples_per_period=40)
    h2 = dyn.gate_half_channel(d, env, MODE, sign, t_start=1 / DG, samples_per_period=40)
    g = dyn.compose_symmetrized_gate(h1, h2)
    p = g.phases
    # (0, Phi, Phi, 0) up to a global phase
    assert abs(p[3] - p[0]) < 1e-9
    assert abs(p[2] - p[1]) < 1e-9
