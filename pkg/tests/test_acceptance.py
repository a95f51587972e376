"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""
import copy
import math
import time

import numpy as np
import pytest

from ionbell import analysis as an
from ionbell import dynamics as dyn
from ionbell import noise as nz
from ionbell import scenarios
from ionbell import sequence as sq

from conftest import record_acceptance


def _cfg(name, seed=None, **sections):
    doc = scenarios.fixture(name)
    for sec, values in sections.items():
        if isinstance(values, dict):
            doc[sec].update(values)
        else:
            doc[sec] = values
    return scenarios.resolve(doc, seed)


def _check(number, passed, detail):
    record_acceptance(number, bool(passed), detail)
    assert passed, detail


def _wrap(x):
    return (x + math.pi) % (2 * math.pi) - math.pi


def test_criterion_01_geometry():
    t0 = time.perf_counter()
    res = scenarios.run(_cfg("mode_geometry")).results
    dt = time.perf_counter() - t0
    eta = (res["eta_a"], res["eta_b"])
    sep = res["separation_m"]
    periods = res["lattice_periods"]
    ok = (abs(eta[0] - 0.121) <= 0.005 and abs(eta[1] - 0.126) <= 0.005
          and abs(sep / 3.5e-6 - 1) <= 0.02 and abs(periods / 12.5 - 1) <= 0.01 and dt < 1)
    _check(1, ok, f"eta = ({eta[0]:.4f}, {eta[1]:.4f}), d = {sep * 1e6:.3f} um, "
                  f"{periods:.3f} periods, {dt:.2f} s")


def test_criterion_02_oracle_equivalence():
    cfg = _cfg("gate_fidelity", noise={"eps_dark_a": 0, "eps_bright_a": 0, "eps_dark_b": 0,
                                       "eps_bright_b": 0, "p_scat": 0})
    phys = scenarios.build(cfg)
    assert phys.setup.n_max == 30 and phys.setup.nbar == 0
    assert phys.setup.envelope.duration == pytest.approx(13.7e-6)
    assert phys.setup.drive.gate_detuning == pytest.approx(1 / 13.7e-6)
    prog = sq.bell_program()
    t0 = time.perf_counter()
    a = sq.run_sequence(prog, phys.setup, engine="analytic")
    o = sq.run_sequence(prog, phys.setup, engine="oracle")
    dt = time.perf_counter() - t0
    diff = float(np.max(np.abs(a.rho - o.rho)))
    _check(2, diff < 1e-6 and dt < 60, f"max |rho_analytic - rho_oracle| = {diff:.2e}, {dt:.1f} s")


def test_criterion_03_symmetrisation():
    rng = np.random.default_rng(20080003)
    mode = scenarios.build(_cfg("mode_geometry")).summary.in_phase
    worst = 0.0
    for _ in range(1000):
        dg = rng.choice([-1, 1]) * rng.uniform(0.5, 2) / 13.7e-6
        om = rng.uniform(-2e5, 2e5, 4)
        d = dyn.DriveConfig(mode.frequency + dg, dg, *om, optical_phase=rng.uniform(0, 2 * np.pi))
        dur = rng.uniform(0.3, 2.0) / abs(dg)
        env = dyn.Envelope(dur, "shaped", rng.uniform(0, dur / 2)) if rng.random() < 0.5 \
            else dyn.Envelope(dur)
        sign = int(rng.choice([-1, 1]))
        h1 = dyn.gate_half_channel(d, env, mode, sign, samples_per_period=40)
        h2 = dyn.gate_half_channel(d, env, mode, sign, t_start=dur + rng.uniform(0, 5e-6),
                                   samples_per_period=40)
        p = dyn.compose_symmetrized_gate(h1, h2).phases
        worst = max(worst, abs(_wrap(p[3] - p[0])), abs(_wrap(p[2] - p[1])))
    _check(3, worst < 1e-9, f"max deviation from (0, Phi, Phi, 0) over 1000 draws = {worst:.1e}")


def test_criterion_04_gate_phase_independence():
    offsets = np.linspace(0, 2 * np.pi, 13)
    spreads = []
    for p_scat in (0.0, 0.01):
        cfg = _cfg("gate_fidelity", noise={"p_scat": p_scat})
        phys = scenarios.build(cfg)
        spreads.append(sq.gate_phase_independence_check(
            sq.bell_program(), phys.setup, offsets, noise=phys.noise))
    worst = max(spreads)
    _check(4, worst < 1e-9, f"fidelity spread over 13 drive-phase offsets = {worst:.1e}")


def test_criterion_05_light_shift_shaping():
    t0 = time.perf_counter()
    cfg = _cfg("lightshift_sweep", lightshift={"ramp_times_s": [0.0, 1.0e-6]})
    res = scenarios.run(cfg).results
    dt = time.perf_counter() - t0
    phys = scenarios.build(cfg)
    delta = phys.setup.drive.difference_frequency
    square, shaped = res["errors"]
    factor = square / shaped
    ok = (abs(square - 0.05) < 1e-6 and factor >= 10 and abs(delta / 2e6 - 1) < 0.1 and dt < 10)
    _check(5, ok, f"square error {square:.4f}, 1 us ramp error {shaped:.2e}, "
                  f"reduction {factor:.0f}x at delta = {delta / 1e6:.2f} MHz, {dt:.2f} s")


def _gate(noise, parity, seed=None):
    return scenarios.run(_cfg("gate_fidelity", seed, noise=noise, parity=parity)).results


def test_criterion_06_fidelity_pipeline():
    clean = {"eps_dark_a": 0.0, "eps_bright_a": 0.0, "eps_dark_b": 0.0, "eps_bright_b": 0.0,
             "p_scat": 0.0}
    readout = {"eps_dark_a": 0.077, "eps_bright_a": 0.077, "eps_dark_b": 0.044,
               "eps_bright_b": 0.044, "p_scat": 0.0}
    exact = {"shots_per_point": 0, "population_shots": 0}
    f_clean = _gate(clean, exact)["parity_fidelity"]
    f_cor = _gate(readout, dict(exact, readout_path="corrected"))["parity_fidelity"]
    f_unc = _gate(readout, dict(exact, readout_path="uncorrected"))["parity_fidelity"]
    increase = f_cor - f_unc
    # 1e6 shots in total: 16 fringe points of 50k plus 200k population shots
    big = _gate(readout, {"shots_per_point": 50_000, "population_shots": 200_000})
    # matched statistics: the default fixture, replicated over seeds
    reps = [_gate({}, {}, seed=s) for s in range(20080001, 20080021)]
    fs = np.array([r["parity_fidelity"] for r in reps])
    fixture = _gate({}, {})
    in_band = abs(fixture["parity_fidelity"] - 0.998) <= 0.006
    in_dist = abs(fs.mean() - 0.998) <= 2 * fs.std(ddof=1)
    ok = (abs(f_clean - 1) < 1e-6 and 0.17 <= increase <= 0.19
          and big["parity_fidelity"] >= 0.998 and in_band and in_dist)
    _check(6, ok, f"noiseless F = {f_clean:.9f}; uncorrected infidelity +{100 * increase:.2f}% "
                  f"(first-order 3/2 sum {150 * (0.077 + 0.044):.2f}%); N=1e6 corrected F = "
                  f"{big['parity_fidelity']:.4f}; fixture F = {fixture['parity_fidelity']:.4f}"
                  f"({fixture['parity_fidelity_sigma']:.4f}); 20 replicates "
                  f"{fs.mean():.4f} +- {fs.std(ddof=1):.4f}")


def test_criterion_07_tomography():
    t0 = time.perf_counter()
    folded = scenarios.run(_cfg("tomography")).results
    t1 = time.perf_counter()
    clean = scenarios.run(_cfg("tomography", noise={"eps_dark_a": 0.0, "eps_bright_a": 0.0,
                                                    "eps_dark_b": 0.0, "eps_bright_b": 0.0})).results
    t2 = time.perf_counter()
    ok = (clean["fidelity"] >= 0.999 and folded["fidelity"] >= 0.99
          and folded["converged"] and clean["converged"] and max(t1 - t0, t2 - t1) < 120)
    _check(7, ok, f"MLE fidelity {clean['fidelity']:.5f} noiseless ({t2 - t1:.2f} s), "
                  f"{folded['fidelity']:.5f} with readout folded ({t1 - t0:.2f} s)")


def test_criterion_08_chsh():
    ideal = _cfg("chsh", noise={"eps_dark_a": 0.0, "eps_bright_a": 0.0, "eps_dark_b": 0.0,
                                "eps_bright_b": 0.0})
    phys = scenarios.build(ideal)
    exact_E = []
    for ta, tb in an.PUBLISHED_ANGLES:
        p = sq.run_sequence(sq.bell_program("chsh", theta_a=ta, theta_b=tb), phys.setup).populations
        exact_E.append(p[0] - p[1] - p[2] + p[3])
    pattern = tuple(int(np.sign(e)) for e in exact_E)
    big = scenarios.run(_cfg("chsh", noise=ideal["noise"],
                             chsh={"shots_per_setting": 1_000_000, "bootstrap_replicates": 0}))
    s_big = big.results["S"]

    res = scenarios.run(_cfg("chsh")).results
    # expectation of S at infinite N through the same readout
    ro = scenarios.build(_cfg("chsh")).readout
    s_inf = 0.0
    for k, (ta, tb) in enumerate(an.PUBLISHED_ANGLES):
        p = sq.run_sequence(sq.bell_program("chsh", theta_a=ta, theta_b=tb), phys.setup).populations
        q = nz.apply_confusion(p, *ro)
        e = q[0] - q[1] - q[2] + q[3]
        s_inf += e if k < 3 else -e
    closed_gap = max(abs(an.s_max(nz.ConfusionMatrix.symmetric(e), nz.ConfusionMatrix.symmetric(e))
                         - 2 * math.sqrt(2) * (1 - 2 * e) ** 2)
                     for e in np.linspace(0.0, 0.1, 21))
    lo = an.s_max(*[nz.ConfusionMatrix.symmetric(0.065)] * 2)
    hi = an.s_max(*[nz.ConfusionMatrix.symmetric(0.045)] * 2)
    table = an.chsh_S(an.PUBLISHED_E, an.PUBLISHED_SIGMA_E)
    ok = (pattern == (1, 1, 1, -1) and abs(s_big - 2 * math.sqrt(2)) < 5 * big.results["sigma_S"]
          and res["S"] < res["S_max"] and s_inf <= res["S_max"] + 1e-9 and closed_gap < 1e-6
          and lo <= 2.236 <= hi and round(table.S, 3) == 2.228)
    _check(8, ok, f"signs {pattern}; S(N=1e6) = {s_big:.4f}; S(N=4000, eps=6%) = {res['S']:.3f}"
                  f" +- {res['sigma_S']:.3f} < S_max {res['S_max']:.3f}; closed-form gap "
                  f"{closed_gap:.1e}; S_max band [{lo:.3f}, {hi:.3f}]; table S = {table.S:.3f}")


def test_criterion_09_statistics():
    res = scenarios.run(_cfg("chsh")).results
    plug = np.array(res["sigma_E"])
    boot = np.array(res["sigma_E_bootstrap"])
    rel = np.max(np.abs(boot / plug - 1))
    ratio = plug / np.array(an.PUBLISHED_SIGMA_E)
    _check(9, rel < 0.10, f"bootstrap vs plug-in sigma_E max rel. diff {100 * rel:.1f}%; plug-in "
                          f"{plug.mean():.4f} is {ratio.mean():.2f}x the published 0.007 "
                          f"(reported, not fitted)")


def test_criterion_10_calibration():
    res = scenarios.run(_cfg("calibration_drift")).results
    sig = res["order_signature_hz"]
    ok = (abs(abs(sig[0]) - 5e3) < 250 and res["order_flagged"] and res["final_order"] == "AB"
          and res["reorder_trials"] == 10_000 and abs(res["mean_reorder_cycles"] - 2.0) <= 0.05
          and res["converged"])
    _check(10, ok, f"swap signature {sig[0] / 1e3:+.2f}/{sig[1] / 1e3:+.2f} kHz detected, final "
                   f"order {res['final_order']}, mean reorder cycles "
                   f"{res['mean_reorder_cycles']:.3f} over {res['reorder_trials']} trials")
