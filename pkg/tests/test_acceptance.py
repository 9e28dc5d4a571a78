"""End-to-end acceptance scenarios on synthetic data.

Each test prints one ``PASS``/``FAIL`` line with the measured value and
the wall time, then asserts. Tolerances are the published targets.
"""

import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from qdtomo import SolverConfig, noise_average_reconstruct, reconstruct, smoothing_penalty
from qdtomo.analysis import dark_count_max, element_fidelities, relative_error, smoothing_sweep
from qdtomo.entanglement import (bell_state, joint_data_from_state, negativity_lower_bound,
                                 pauli_settings, werner_negativity, werner_state)
from qdtomo.fock import ProbeEnsemble, build_response
from qdtomo.simulation import Scenario, simulate

LOSSY = Scenario(xmax=40.0, count=200, kind="mixed", M=60, M_gen=150, tail_tol=5e-3)
SHOTS = 38084


@pytest.fixture
def verdict(capsys):
    t0 = time.perf_counter()

    def emit(num, ok, what, limit=None):
        dt = time.perf_counter() - t0
        over = limit is not None and dt > limit
        tag = "PASS" if ok and not over else "FAIL"
        extra = f" (over {limit:.0f} s budget)" if over else ""
        with capsys.disabled():
            print(f"\n[criterion {num}] {tag}: {what}; {dt:.1f} s{extra}")
        return ok and not over

    def note(num, text):
        with capsys.disabled():
            print(f"\n[criterion {num}] info: {text}")

    emit.note = note
    return emit


def test_c1_perfect_counter_under_intensity_jitter(verdict):
    sc = Scenario(xmax=30.0, count=60, spacing="amplitude", kind="pure", M=60, M_gen=150,
                  tail_tol=1e-6, jitter=0.02, seed=0)
    d = simulate("perfect_number", sc)
    rep = reconstruct(d.stats, d.response, SolverConfig(regularizer="none"))
    f = element_fidelities(rep.povm, d.truth)
    ok = verdict(1, f.min() >= 0.99, f"min element fidelity {f.min():.4f} >= 0.99", 30)
    others = []
    for seed in range(1, 5):
        e = simulate("perfect_number", replace(sc, seed=seed))
        r = reconstruct(e.stats, e.response, SolverConfig(regularizer="none"))
        others.append(element_fidelities(r.povm, e.truth).min())
    verdict.note(1, "min fidelity for jitter seeds 1-4: " + ", ".join(f"{v:.4f}" for v in others))
    assert ok


def test_c2_c6_lossy_tmd_fidelity_and_dark_counts(verdict):
    d = simulate("lossy_tmd_52", LOSSY)
    rep = reconstruct(d.stats, d.response, SolverConfig(y=0.1))
    f = element_fidelities(rep.povm, d.truth)
    dark = dark_count_max(rep.povm)
    ok2 = verdict(2, f.min() >= 0.987, f"min element fidelity {f.min():.4f} >= 0.987", 300)
    ok6 = verdict(6, dark < 1e-3, f"max coefficient below the click number {dark:.2e} < 1e-3")
    n = simulate("lossy_tmd_52", replace(LOSSY, shots=SHOTS))
    nr = reconstruct(n.stats, n.response, SolverConfig(y=0.1))
    verdict.note(2, f"with {SHOTS} shots per probe: min fidelity "
                    f"{element_fidelities(nr.povm, n.truth).min():.4f}, "
                    f"dark-count max {dark_count_max(nr.povm):.2e}")
    assert ok2 and ok6
    assert rep.povm.is_feasible()


@pytest.mark.slow
def test_c3_smoothing_insensitivity(verdict):
    ys = [0.0, 0.01, 0.05, 0.2, 1.0]
    errs = {y: [] for y in ys}
    for seed in range(8):
        d = simulate("lossy_tmd_52", replace(LOSSY, shots=SHOTS, seed=seed))
        ref = reconstruct(d.stats, d.response, SolverConfig(y=0.1)).povm
        for y in ys:
            cfg = SolverConfig(y=y) if y > 0 else SolverConfig(regularizer="none")
            errs[y].append(relative_error(reconstruct(d.stats, d.response, cfg).povm, ref))
        verdict.note(3, f"seed {seed}: " + ", ".join(f"y={y:g} {errs[y][-1]:.2f}%" for y in ys))
    med = {y: float(np.median(v)) for y, v in errs.items()}
    ok = (med[0.01] <= 6 and med[1.0] <= 6 and med[0.05] <= 3 and med[0.2] <= 3 and med[0.0] >= 50)
    ok = verdict(3, ok, "median relative error vs y=0.1: " + ", ".join(f"y={y:g} {med[y]:.2f}%" for y in ys)
                 + " (bands 6/3/3/6%, y=0 >= 50%)", 1800)
    assert ok


def test_c4_pure_vs_mixed_response(verdict):
    worst = 0.0
    for seed in range(3):
        d = simulate("lossy_tmd_52", replace(LOSSY, shots=SHOTS, seed=seed))
        Fp = build_response(ProbeEnsemble(d.probes.intensities, "pure"), 60, 5e-3)
        a = reconstruct(d.stats, d.response, SolverConfig(y=0.1)).povm
        b = reconstruct(d.stats, Fp, SolverConfig(y=0.1)).povm
        worst = max(worst, relative_error(b, a))
    ok = verdict(4, worst <= 2.0, f"largest pure/mixed relative difference over 3 seeds {worst:.3f}% <= 2%", 600)
    assert ok


@pytest.mark.slow
def test_c5_sharpness_and_over_smoothing(verdict):
    exact_sc = Scenario(xmax=30.0, count=100, kind="pure", M=60, tail_tol=1e-6)
    d = simulate("perfect_number", exact_sc)
    rep = reconstruct(d.stats, d.response, SolverConfig(regularizer="none"))
    err = float(np.abs(rep.povm.coeffs - d.truth.coeffs).max())
    sc = replace(LOSSY, shots=SHOTS)
    sharp = {c.axis: c.metric for c in smoothing_sweep("sharp_artificial", [0.01, 0.1], scenario=sc).cells}
    lossy = {c.axis: c.metric for c in
             smoothing_sweep("sharp_artificial_loss_20", [0.01, 0.1], scenario=sc).cells}
    ok_a = err < 1e-6
    ok_b = sharp[0.1] > sharp[0.01]
    ok_c = lossy[0.1] < lossy[0.01]
    verdict.note(5, f"perfect counter max error {err:.2e} (< 1e-6: {ok_a})")
    verdict.note(5, f"sharp: error y=0.01 {sharp[0.01]:.4f}, y=0.1 {sharp[0.1]:.4f} (over-smoothing: {ok_b})")
    verdict.note(5, f"sharp + 20% loss: error y=0 {lossy[0.0]:.4f}, y=0.01 {lossy[0.01]:.4f}, "
                    f"y=0.1 {lossy[0.1]:.4f} (smoothing helps: {ok_c})")
    ok = verdict(5, ok_a and ok_b and ok_c, "exact recovery, over-smoothing and loss ordering", 900)
    assert ok


PROPERTY_TESTS = [
    "tests/test_detectors.py::test_binning_rows_normalised_and_causal",
    "tests/test_detectors.py::test_binning_equals_brute_force",
    "tests/test_detectors.py::test_loss_matrix_columns",
    "tests/test_solver.py::test_every_output_is_feasible",
    "tests/test_analysis.py::test_closed_form_matches_integral",
    "tests/test_analysis.py::test_trace_identity",
    "tests/test_kernels.py::test_projection_matches_enumeration",
    "tests/test_kernels.py::test_projection_random_nine_dim",
    "tests/test_solver.py::test_optimality_certificate_on_noiseless_data",
]


def test_c7_property_suites(verdict):
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
                         cwd=root, capture_output=True, text=True)
    summary = out.stdout.strip().splitlines()[-1] if out.stdout.strip() else out.stderr[-200:]
    ok = verdict(7, out.returncode == 0, f"property suites: {summary}", 300)
    assert ok, out.stdout[-3000:]


def test_c8_entanglement_bounds(verdict):
    pauli = pauli_settings()
    bell = negativity_lower_bound(joint_data_from_state(pauli, pauli, bell_state())).bound
    prod = np.zeros((4, 4), dtype=complex)
    prod[0, 0] = 1.0
    product = negativity_lower_bound(joint_data_from_state(pauli, pauli, prod)).bound
    vs = np.linspace(0.0, 1.0, 101)
    bounds = np.array([negativity_lower_bound(joint_data_from_state(pauli, pauli, werner_state(v))).bound
                       for v in vs])
    crossing = float(vs[np.argmax(bounds > 1e-6)])
    oracle_gap = float(np.abs(bounds - [werner_negativity(v) for v in vs]).max())
    ok = bell >= 0.95 and product <= 1e-6 and abs(crossing - 1 / 3) <= 0.02
    ok = verdict(8, ok, f"Bell {bell:.4f} >= 0.95, product {product:.1e} <= 1e-6, Werner crossing "
                        f"v={crossing:.2f} (1/3 +- 0.02), max gap to analytic {oracle_gap:.1e}", 120)
    assert ok


@pytest.mark.slow
def test_c9_noise_averaging_leaves_dips(verdict):
    d = simulate("lossy_tmd_52", replace(LOSSY, shots=SHOTS, seed=0))
    smooth = smoothing_penalty(reconstruct(d.stats, d.response, SolverConfig(y=0.1)).povm.coeffs)
    cfg = SolverConfig(regularizer="none", noise_runs=150, noise_sigma_rel=0.01, tail_tol=5e-3, seed=0)
    avg = noise_average_reconstruct(d.stats, d.probes, cfg, M=60, jobs=min(4, os.cpu_count() or 1))
    s_avg = smoothing_penalty(avg.povm.coeffs)
    ok = verdict(9, s_avg >= 5 * smooth, f"averaged S {s_avg:.3f} vs smoothed S {smooth:.3f}, "
                                         f"ratio {s_avg / smooth:.2f} >= 5", 2700)
    assert ok
