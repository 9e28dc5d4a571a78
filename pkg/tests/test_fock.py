import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from qdtomo.detectors import apd_povm, perfect_number_povm, povm_zoo
from qdtomo.errors import DimensionMismatch, TruncationInsufficient, ValidationError
from qdtomo.fock import (FockDiagonalPOVM, ProbeEnsemble, StatisticsMatrix, build_mixed_response,
                         build_pure_response, mixed_row, predict_statistics, sample_statistics)


def pure(x):
    return ProbeEnsemble(np.atleast_1d(np.asarray(x, float)), "pure")


def test_vacuum_probe_row():
    F = build_pure_response(pure([0.0]), 10).F
    assert F[0, 0] == 1.0 and np.all(F[0, 1:] == 0.0)


def test_single_photon_weight_at_unit_intensity():
    F = build_pure_response(pure([1.0]), 10, tail_tol=1e-6).F
    assert F[0, 1] == pytest.approx(math.exp(-1), abs=1e-15)


def test_tail_matches_poisson_cdf():
    R = build_pure_response(pure([4.0]), 60)
    assert R.tail_mass[0] < 1e-6
    assert abs(R.F.sum() - stats.poisson.cdf(60, 4.0)) < 1e-14


def test_large_intensity_no_overflow():
    R = build_pure_response(pure([150.0]), 400)
    assert np.all(np.isfinite(R.F))
    assert abs(R.F[0] - stats.poisson.pmf(np.arange(401), 150.0)).max() < 1e-13


def test_truncation_insufficient():
    with pytest.raises(TruncationInsufficient, match="increase M"):
        build_pure_response(pure([30.0]), 20)


@given(st.lists(st.floats(0.0, 25.0), min_size=1, max_size=8, unique=True))
def test_pure_normalisation_and_monotone_tail(xs):
    x = np.sort(np.array(xs))
    if np.any(np.diff(x) <= 0):
        return
    R = build_pure_response(pure(x), 80, tail_tol=1.0)
    assert np.all(np.abs(R.F.sum(axis=1) + R.tail_mass - 1.0) < 1e-12)
    assert np.all(np.diff(R.tail_mass) >= -1e-15)
    assert np.all((R.F >= 0) & (R.F <= 1))


def _mixed_oracle(x, sigma_rel, M):
    a = math.sqrt(x)
    g = sigma_rel * a / 2
    lo, hi = max(0.0, a - 6 * g), a + 6 * g
    w = lambda b: math.exp(-((b - a) ** 2) / (2 * g * g))
    norm = integrate.quad(w, lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
    return np.array([integrate.quad(lambda b: w(b) * stats.poisson.pmf(k, b * b), lo, hi,
                                    epsabs=1e-14, epsrel=1e-13, limit=200)[0] / norm
                     for k in range(M + 1)])


def test_mixed_row_against_adaptive_quadrature():
    row = mixed_row(10.0, 0.02, 30)
    assert np.abs(row - _mixed_oracle(10.0, 0.02, 30)).max() < 1e-9


def test_mixed_row_close_to_pure_at_x10():
    row = mixed_row(10.0, 0.02, 60)
    p = stats.poisson.pmf(np.arange(61), 10.0)
    assert np.linalg.norm(row - p) / np.linalg.norm(p) < 0.02


def test_mixed_pure_limit():
    x = np.array([0.5, 3.0, 12.0])
    Fm = build_mixed_response(ProbeEnsemble(x, "mixed", 1e-6), 60).F
    Fp = build_pure_response(pure(x), 60).F
    assert np.abs(Fm - Fp).max() < 1e-6


def test_mixed_vacuum_centre():
    F = build_mixed_response(ProbeEnsemble(np.array([0.0, 1.0]), "mixed", 0.02), 20).F
    assert F[0, 0] >= 0.999


def test_mixed_requires_mixed_kind():
    with pytest.raises(ValidationError):
        build_mixed_response(pure([1.0]), 10)


def test_identity_povm_gives_poisson_statistics():
    R = build_pure_response(pure([1.0]), 30)
    P = predict_statistics(perfect_number_povm(31, 30), R).P
    assert np.abs(P[0] - stats.poisson.pmf(np.arange(31), 1.0)).max() < 1e-15


def test_apd_click_probability_closed_form():
    x = np.linspace(0.0, 10.0, 21)
    P = predict_statistics(apd_povm(1.0, 60), build_pure_response(pure(x), 60)).P
    assert np.abs(P[:, 1] - (1 - np.exp(-x))).max() < 1e-12


@pytest.mark.parametrize("case", ["lossy_tmd_52", "sharp_artificial"])
def test_complete_povm_rows_sum_to_one_minus_tail(case):
    R = build_pure_response(pure(np.linspace(0, 30, 40)), 60, tail_tol=1e-5)
    P = predict_statistics(povm_zoo(case), R).P
    assert np.abs(P.sum(axis=1) - (1 - R.tail_mass)).max() < 1e-9


def test_forward_model_extended_precision():
    rng = np.random.default_rng(3)
    M = 8
    C = rng.random((M + 1, 4))
    C /= C.sum(axis=1, keepdims=True)
    x = np.array([0.1, 0.7, 1.3, 2.0])
    P = predict_statistics(FockDiagonalPOVM(C), build_pure_response(pure(x), M, tail_tol=1.0)).P
    mpmath.mp.dps = 40
    for i, xi in enumerate(x):
        for n in range(4):
            ref = mpmath.fsum(mpmath.exp(-mpmath.mpf(xi)) * mpmath.mpf(xi) ** k / mpmath.factorial(k)
                              * mpmath.mpf(C[k, n]) for k in range(M + 1))
            assert abs(P[i, n] - float(ref)) < 1e-12


def test_predict_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        predict_statistics(perfect_number_povm(9, 20), build_pure_response(pure([1.0]), 30))


def test_sampling_large_J_within_clt_bounds():
    p = np.array([[0.2, 0.5, 0.3], [0.9, 0.05, 0.05]])
    J = 10 ** 7
    S = sample_statistics(StatisticsMatrix(p), J, seed=11)
    sd = np.sqrt(p * (1 - p) / J)
    assert np.all(np.abs(S.P - p) <= 4 * sd)
    assert np.all(S.trials == J)


def test_sampling_deterministic_row_and_seed():
    p = np.array([[1.0, 0.0, 0.0], [0.3, 0.3, 0.4]])
    a = sample_statistics(StatisticsMatrix(p), 1000, seed=5)
    b = sample_statistics(StatisticsMatrix(p), 1000, seed=5)
    assert np.array_equal(a.P[0], [1.0, 0.0, 0.0])
    assert np.array_equal(a.P, b.P)
    assert a.meta["J"] == 1000 and a.meta["seed"] == 5


def test_probe_validation():
    with pytest.raises(ValidationError):
        ProbeEnsemble(np.array([1.0, -1.0]))
    with pytest.raises(ValidationError):
        ProbeEnsemble(np.array([2.0, 1.0]))
    with pytest.raises(ValidationError):
        ProbeEnsemble(np.array([1.0]), kind="thermal")


@settings(max_examples=30)
@given(st.sampled_from(["linear", "amplitude", "log"]), st.integers(2, 300), st.floats(1.0, 60.0))
def test_probe_grids_are_strictly_increasing(spacing, count, xmax):
    p = ProbeEnsemble.grid(xmax, count, spacing)
    assert p.D == count and np.all(np.diff(p.intensities) > 0)
    assert p.intensities[-1] == pytest.approx(xmax)


def test_povm_invariants():
    with pytest.raises(ValidationError):
        FockDiagonalPOVM(np.array([[np.nan, 1.0], [0.0, 1.0]]))
    bad = FockDiagonalPOVM(np.array([[1.2, -0.2], [0.5, 0.5]]))
    assert not bad.is_feasible()
    assert povm_zoo("lossy_tmd_52").is_feasible()
