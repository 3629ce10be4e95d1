"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Tolerances are the published targets; nothing here is relaxed to make a
criterion pass.  Lines are collected by ``conftest.verdict`` and echoed in
the terminal summary.
"""
import time

import numpy as np
import pytest

from couplersim import captable as ct
from couplersim import parity as pm
from couplersim.cli import main
from couplersim.dynamics.cz import CZSetup, calibrate_cz, gate_error_and_leakage
from couplersim.dynamics.rb import coherence_limit, simultaneous_rb, single_qubit_rb
from couplersim.dynamics.readout import readout_stark_chevron
from couplersim.spectrum import interaction_profile, xi_zz

EDGES = ("Q1-Q0", "Q2-Q0", "Q3-Q0", "Q4-Q0")


def _window(device, edge):
    fs = device.mode(device.edge(edge).coupler).f_sweetspot
    return fs - 0.55, fs


@pytest.fixture(scope="module")
def profiles(device):
    out = {}
    for edge in EDGES:
        t0 = time.perf_counter()
        prof = interaction_profile(device, edge, _window(device, edge), 66)
        out[edge] = (prof, time.perf_counter() - t0)
    return out


def test_criterion_1_interaction_nulls(device, profiles, verdict):
    checks = {}
    for edge, (prof, dt) in profiles.items():
        e = device.edge(edge)
        sub = device.edge_subgraph(e)
        nulls = prof.nulls
        freqs = [nulls[k].frequency for k in ("xi_zz", "j1", "j2")]
        distinct = all(nulls[k].valid and not nulls[k].degenerate for k in nulls) and \
            min(np.diff(sorted(freqs))) > 1e-3
        checks[f"{edge} three nulls"] = (distinct, ", ".join(f"{f:.4f}" for f in freqs) + " GHz")
        f_hi = max(sub.mode(e.qubit_a).f_sweetspot, sub.mode(e.qubit_b).f_sweetspot)
        above = (nulls["xi_zz"].frequency - f_hi) * 1e3
        checks[f"{edge} xi-null offset"] = (400 <= above <= 1000, f"{above:.0f} MHz")
        fr = sub.sweetspots()
        fr[e.coupler] = nulls["j1"].frequency
        xi = xi_zz(sub, fr, e)
        checks[f"{edge} |xi| at J1 null"] = (abs(xi) < 100, f"{xi:.1f} kHz")
        checks[f"{edge} runtime"] = (dt < 120, f"{dt:.1f} s")
    assert verdict(1, "interaction nulls", checks)


def test_criterion_2_truncation_convergence(device, verdict):
    checks = {}
    for edge in EDGES:
        sub = device.edge_subgraph(edge)
        win = _window(device, edge)
        a = interaction_profile(sub.with_truncation(4), edge, win, 12).xi_zz
        b = interaction_profile(sub.with_truncation(5), edge, win, 12).xi_zz
        diff = float(np.nanmax(np.abs(a - b)))
        checks[edge] = (diff < 1.0, f"max |dxi| {diff:.3g} kHz")
    assert verdict(2, "truncation convergence", checks)


@pytest.fixture(scope="module")
def cz_setup(device):
    return CZSetup.create(device, "Q2-Q0")


def test_criterion_3_calibrated_cz(cz_setup, verdict):
    t0 = time.perf_counter()
    cal = calibrate_cz(cz_setup, 60.0)
    wf = cz_setup.waveforms(cal.spec, cal.low_detuning_mhz)
    coh = gate_error_and_leakage(cz_setup.channel(wf))
    noisy = gate_error_and_leakage(cz_setup.channel(wf, True))
    dt = time.perf_counter() - t0
    phase = abs(cal.metrics.conditional_phase) % 360.0
    checks = {
        "phase": (abs(phase - 180.0) <= 0.1, f"{phase:.4f} deg"),
        "coherent error": (coh["gate_error"] < 2e-3, f"{coh['gate_error']:.3g}"),
        "L1": (coh["L1"] < 1e-3, f"{coh['L1']:.3g}"),
        "noisy error": (3e-3 <= noisy["gate_error"] <= 1.5e-2, f"{noisy['gate_error'] * 100:.3f} %"),
        "runtime": (dt < 300, f"{dt:.1f} s"),
    }
    assert verdict(3, "calibrated CZ", checks)


def test_criterion_4_leakage_vs_duration(cz_setup, verdict):
    leak = []
    for t_p in (40.0, 60.0, 120.0, 300.0):
        leak.append(calibrate_cz(cz_setup, t_p).metrics.leakage_L1)
    mono = all(b <= a for a, b in zip(leak, leak[1:]))
    assert verdict(4, "leakage vs pulse length", {
        "non-increasing": (mono, ", ".join(f"{x:.2g}" for x in leak))})


def test_criterion_5_randomized_benchmarking(device, verdict):
    checks = {}
    r0 = single_qubit_rb(None, n_seq=3, lengths=(1, 10, 50)).error_per_gate
    checks["zero noise"] = (r0 < 1e-6, f"r={r0:.2g}")
    for q in ("Q0", "Q1", "Q2", "Q3", "Q4"):
        n = device.noise_for(q)
        r = single_qubit_rb(n, n_seq=8, seed=1).error_per_gate
        ratio = r / coherence_limit(n, 20.0)
        checks[q] = (0.5 <= ratio <= 2.0, f"r/limit {ratio:.3f}")
    na, nb = device.noise_for("Q1"), device.noise_for("Q0")
    kw = dict(n_seq=6, lengths=(1, 50, 200, 500, 1000), seed=3)
    ind = simultaneous_rb(na, nb, 500.0, simultaneous=False, **kw).error_per_gate
    sim = simultaneous_rb(na, nb, 500.0, simultaneous=True, **kw).error_per_gate
    checks["simultaneous > individual"] = (sim > ind, f"{sim:.3g} vs {ind:.3g}")
    assert verdict(5, "randomized benchmarking", checks)


def test_criterion_6_readout_suppression(device, profiles, verdict):
    checks = {}
    amps = np.linspace(0.0, 1.5, 7)
    for edge, (prof, _) in profiles.items():
        for manifold, null in (("one_excitation", "j1"), ("two_excitation", "j2")):
            f0 = prof.nulls[null].frequency
            chev = readout_stark_chevron(device, edge, [f0], amps, manifold=manifold)
            worst = float(chev.column(f0).max())
            checks[f"{edge} {null}"] = (worst < 0.01, f"max transfer {worst:.2g}")
    assert verdict(6, "readout exchange suppression", checks)


def test_criterion_7_parity_monte_carlo(device, profiles, verdict):
    checks = {}
    free = pm.run_parity(pm.ParityExperiment(n_shots=100_000, toggle_spectator=True,
                                             error_params=pm.ErrorChannelSet()))
    checks["error-free"] = (bool(np.all(free.defect_rate[1:] == 0)), "max "
                            f"{np.nanmax(free.defect_rate):.2g}")

    errors = pm.reference_error_channels()
    base = pm.ParityExperiment(n_shots=100_000, error_params=errors)
    res = pm.run_parity(base)
    drift = abs(res.slope(10)) * 90
    top = float(np.nanmax(res.defect_rate))
    checks["baseline flat"] = (drift < 0.01, f"drift {drift * 100:.3f} pp over rounds 10-100")
    checks["baseline < 12%"] = (top < 0.12, f"max {top * 100:.2f} %")

    p = pm.markov_leak_population(errors.round_leakage(False), errors.seepage, base.n_rounds)
    sigma = np.sqrt(p * (1 - p) / base.n_shots)
    z = float(np.max(np.abs(res.leak_population - p) / np.maximum(sigma, 1e-300)))
    checks["leak Markov oracle"] = (z <= 3.0, f"max |z| {z:.2f}")

    e = device.edge("Q4-Q0")
    prof = profiles["Q4-Q0"][0]
    lo, hi = _window(device, "Q4-Q0")
    grid = np.linspace(lo, hi, 9)
    chev = readout_stark_chevron(device, e, grid, np.array([0.5]), manifold="two_excitation",
                                 measured="Q0")
    tmpl = pm.replace(base, toggle_spectator=True)
    t0 = time.perf_counter()
    curve = pm.defect_rate_vs_bias(tmpl, grid, prof, chev, 0.5)
    per_point = (time.perf_counter() - t0) / len(grid)
    best = curve.best_bias()
    xi_best = float(np.interp(best, curve.bias, curve.xi_zz))
    checks["toggled minimum near ZZ null"] = (abs(xi_best) < 200,
                                              f"{best:.3f} GHz, xi {xi_best:.0f} kHz")
    k = int(np.nanargmax(np.abs(curve.xi_zz)))
    checks["large-|xi| slope > 0"] = (curve.toggled_slope[k] > 0,
                                      f"{curve.toggled_slope[k]:.2e}/round at xi {curve.xi_zz[k]:.0f} kHz")
    checks["runtime per bias"] = (per_point < 60, f"{per_point:.1f} s")
    assert verdict(7, "parity Monte Carlo", checks)


def test_criterion_8_capacitance_tables(verdict):
    t_lut, c_lut = ct.SYNTHETIC_TRANSMON.lut(), ct.SYNTHETIC_COUPLER.lut()
    corner = max(float(np.max(np.abs(ct.interpolate(l, l.corner_dims(k)) - l.corners[k])))
                 for l in (t_lut, c_lut) for k in range(len(l.corners)))
    rng = np.random.default_rng(8)
    multi = 0.0
    for _ in range(50):
        dims = ct.TRANSMON_LOW + rng.random(len(ct.TRANSMON_LOW)) * (ct.TRANSMON_HIGH - ct.TRANSMON_LOW)
        multi = max(multi, float(np.max(np.abs(ct.interpolate(t_lut, dims)
                                               - ct.SYNTHETIC_TRANSMON.matrix(dims)))))
    mid_t = 0.5 * (ct.TRANSMON_LOW + ct.TRANSMON_HIGH)
    mid_c = 0.5 * (ct.COUPLER_LOW + ct.COUPLER_HIGH)
    truth = ct.forward_map(t_lut, c_lut, mid_t, mid_c)
    pert = ct.forward_map(ct.SYNTHETIC_TRANSMON.lut(0.003, 1), ct.SYNTHETIC_COUPLER.lut(0.003, 2),
                          mid_t, mid_c)
    mid = max(abs(getattr(pert, k) / getattr(truth, k) - 1) for k in ("g_qq", "g_qc", "e_c_qubit"))
    res = ct.design_search({"g_qq": 6.0, "g_qc": 70.0}, t_lut, c_lut)
    assert verdict(8, "capacitance tables", {
        "corner exact": (corner < 1e-12, f"{corner:.2g}"),
        "multilinear exact": (multi < 1e-12, f"{multi:.2g}"),
        "midpoint error": (mid <= 3e-3, f"{mid * 100:.3f} %"),
        "design residual": (res.max_residual <= 0.01, f"{res.max_residual:.2g}"),
    })


CLI_CASES = {
    "sweep-interactions": "[sweep]\nedges = Q1-Q0\nn_points = 12\n",
    "cz": "[cz]\nnoise = no\n",
    "cz-landscape": "[cz]\nmode = landscape\nn_theta = 2\nn_detuning = 2\n",
    "readout-exchange": "[readout]\nn_coupler = 3\nn_amp = 3\nprofile_points = 20\n",
    "parity-single": "[parity]\nmode = single\nn_shots = 3000\nn_rounds = 12\n",
    "parity-bias": "[parity]\nmode = bias\nn_bias = 3\nn_shots = 2000\nn_rounds = 12\n"
                   "profile_points = 20\n",
    "parity-detuning": "[parity]\nmode = detuning\nn_shots = 2000\nn_rounds = 12\n",
    "parity-amplitude": "[parity]\nmode = amplitude\nn_shots = 2000\nn_rounds = 12\n"
                        "amplitudes = 0.3, 0.6, 0.9\n",
    "lut-design": "[lut]\nperturbation = 0.003\n",
}


def _body(path):
    return "".join(l for l in path.read_text().splitlines(True) if not l.startswith("#"))


def test_criterion_9_reproducible_outputs(tmp_path, verdict):
    checks = {}
    for case, cfg in CLI_CASES.items():
        command = case.split("-")[0] if case.startswith(("cz", "parity")) else case
        dirs = []
        for rep in ("a", "b"):
            path = tmp_path / f"{case}.cfg"
            path.write_text(cfg)
            out = tmp_path / f"{case}_{rep}"
            code = main([command, "--config", str(path), "--out", str(out), "--seed", "11"])
            dirs.append((code, out))
        (c1, o1), (c2, o2) = dirs
        names = sorted(p.name for p in o1.glob("*.csv")) if c1 == 0 else []
        same = c1 == c2 == 0 and bool(names) and all(_body(o1 / n) == _body(o2 / n) for n in names)
        checks[case] = (same, f"rc {c1}/{c2}, {len(names)} csv")
    assert verdict(9, "seeded reproducibility", checks)
