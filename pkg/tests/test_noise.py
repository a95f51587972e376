import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionbell import noise
from ionbell.crystal import Order

PHI_PLUS = np.array([1, 0, 0, 1]) / math.sqrt(2)
BELL = np.outer(PHI_PLUS, PHI_PLUS).astype(complex)


def test_confusion_matrix_layout():
    c = noise.ConfusionMatrix(eps_dark=0.1, eps_bright=0.02)
    # prepared down read up with eps_bright, prepared up read down with eps_dark
    assert c.matrix @ [1, 0] == pytest.approx([0.98, 0.02])
    assert c.matrix @ [0, 1] == pytest.approx([0.1, 0.9])
    assert c.mean_error == pytest.approx(0.06)
    with pytest.raises(ValueError):
        noise.ConfusionMatrix(-0.1, 0)


@given(st.floats(0, 0.4), st.floats(0, 0.4), st.floats(0, 0.4), st.floats(0, 0.4))
def test_joint_confusion_is_stochastic(a, b, c, d):
    m = noise.joint_confusion(noise.ConfusionMatrix(a, b), noise.ConfusionMatrix(c, d))
    assert np.allclose(m.sum(axis=0), 1)
    assert np.all(m >= 0)


def test_sampling_is_reproducible_and_round_trips():
    s1 = noise.sample_shots([0.5, 0, 0, 0.5], 1000, seed=7, setting="ZZ")
    s2 = noise.sample_shots([0.5, 0, 0, 0.5], 1000, seed=7, setting="ZZ")
    assert np.array_equal(s1.counts, s2.counts)
    assert s1.total == 1000
    assert s1.counts[1] == s1.counts[2] == 0
    back = noise.ShotSet.from_dict(s1.to_dict())
    assert np.array_equal(back.counts, s1.counts) and back.setting == "ZZ"


def test_sampling_converges_to_distribution():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    s = noise.sample_shots(p, 400_000, seed=1)
    assert np.max(np.abs(s.frequencies - p)) < 5 * math.sqrt(0.25 / 400_000)


def test_depolarize_full_strength_gives_mixed_state():
    out = noise.depolarize(BELL, 1.0, 1.0)
    assert np.allclose(out, np.eye(4) / 4)


@given(st.floats(0, 0.1), st.integers(1, 8))
def test_scattering_costs_requested_bell_fidelity(p, k):
    ch = noise.scattering_channel(p, k)
    rho = BELL
    for _ in range(k):
        rho = ch.apply(rho)
    assert np.real(PHI_PLUS @ rho @ PHI_PLUS) == pytest.approx(1 - p, abs=1e-12)
    assert np.trace(rho).real == pytest.approx(1)


def test_scattering_validation():
    with pytest.raises(ValueError):
        noise.ScatteringChannel(0.2)
    with pytest.raises(ValueError):
        noise.ScatteringChannel(0.1, 0)


def test_prepared_state():
    rho = noise.prepared_state(0.01, 0.02)
    assert np.real(np.diag(rho)) == pytest.approx([0.99 * 0.98, 0.99 * 0.02, 0.01 * 0.98, 0.01 * 0.02])


def test_order_signature_is_about_five_khz():
    da, db = noise.DriftModel().order_signature()
    assert abs(da) == pytest.approx(5e3, rel=0.05)
    assert abs(db) == pytest.approx(5e3, rel=0.15)
    assert da * db < 0


def test_zero_volatility_drift_keeps_frequencies():
    m = noise.DriftModel()
    state = noise.DriftState(m.b0, Order.AB)
    f0 = m.qubit_frequencies(state.b_common)
    for _ in range(50):
        state = noise.drift_step(m, state, 3.0, np.random.default_rng(0))
    assert m.qubit_frequencies(state.b_common) == f0
    assert all(f > 0 for f in f0)


@given(st.floats(0, 0.2), st.floats(0, 0.2), st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_symmetric_readout_scales_parity_contrast(ea, eb, c, phi):
    # P_odd(phi) = (1 - C cos(2 phi)) / 2 split evenly between the odd outcomes
    def true_pops(x):
        odd = 0.5 * (1 - c * math.cos(2 * x))
        return np.array([(1 - odd) / 2, odd / 2, odd / 2, (1 - odd) / 2])

    ca, cb = noise.ConfusionMatrix.symmetric(ea), noise.ConfusionMatrix.symmetric(eb)
    signs = np.array([1, -1, -1, 1])
    measured = signs @ noise.apply_confusion(true_pops(phi), ca, cb)
    assert measured == pytest.approx(signs @ true_pops(phi) * (1 - 2 * ea) * (1 - 2 * eb),
                                     abs=1e-12)


def test_drift_step_statistics():
    m = noise.DriftModel(volatility=1e-7, correlation_time=2.0)
    rng = np.random.default_rng(3)
    state = noise.DriftState(m.b0, Order.AB)
    samples = []
    for _ in range(20000):
        state = noise.drift_step(m, state, 1.0, rng)
        samples.append(state.b_common - m.b0)
    stationary_sd = 1e-7 * math.sqrt(2.0 / 2)
    assert np.std(samples) == pytest.approx(stationary_sd, rel=0.05)
    assert state.time == pytest.approx(20000.0)


def test_detect_order_on_exact_detunings():
    m = noise.DriftModel()
    lo = m.qubit_frequencies(m.b0, Order.AB)
    for order in Order:
        for shift in (-3e-9, 0.0, 4e-9):
            fa, fb = m.qubit_frequencies(m.b0 + shift, order)
            est, common = noise.detect_order(m, fa - lo[0], fb - lo[1])
            assert est is order
            # a reversal moves the ions in opposite directions, leaving the mean
            assert common == pytest.approx(shift, abs=1e-12)


def test_reorder_cycle_statistics():
    m = noise.DriftModel()
    rng = np.random.default_rng(11)
    cycles = [noise.reorder(m, Order.BA, rng)[1] for _ in range(20000)]
    # geometric with success probability one half
    assert np.mean(cycles) == pytest.approx(2.0, abs=0.05)
    assert noise.reorder(m, Order.AB, rng) == (Order.AB, 0)


def test_rabi_lineshape_peak_and_zero():
    t = 100e-6
    assert noise.rabi_lineshape(0.0, t) == pytest.approx(1.0)
    # first zero at sqrt(3) times the Rabi frequency
    assert noise.rabi_lineshape(math.sqrt(3) / (2 * t), t) == pytest.approx(0, abs=1e-12)


def test_probe_recovers_detuning():
    rng = np.random.default_rng(5)
    r = noise.calibration_probe(1.3e3, 100e-6, rng, shots=400)
    assert r.converged
    assert abs(r.estimate - 1.3e3) < 5 * r.sigma + 50


def test_calibration_cycle_fixes_wrong_order():
    m = noise.DriftModel()
    lo = m.qubit_frequencies(m.b0, Order.AB)
    rng = np.random.default_rng(2)
    rep, state = noise.calibration_cycle(m, noise.DriftState(m.b0 + 2e-9, Order.BA), lo, rng,
                                         shots=400)
    assert rep.converged and rep.order_flagged and rep.reorder_cycles >= 1
    assert state.order is Order.AB
    fa, fb = m.qubit_frequencies(state.b_common, state.order)
    assert abs(rep.lo_frequencies[0] - fa) < 300
    assert abs(rep.lo_frequencies[1] - fb) < 300


@settings(max_examples=50, deadline=None)
@given(st.floats(-20e3, 20e3))
def test_probe_failure_is_flagged_not_raised(det):
    r = noise.calibration_probe(det, 100e-6, np.random.default_rng(0), shots=50)
    if r.converged:
        assert abs(r.estimate) <= 2 / 100e-6
        assert math.isfinite(r.sigma)
