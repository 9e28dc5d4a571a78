import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdtomo.detectors import (LOSSY_TMD_EFFICIENCY, MEASURED_REFLECTIVITIES, SplitterTree,
                              apd_povm, binning_recursion, loss_matrix, lossy_tmd_povm,
                              perfect_number_povm, povm_zoo, sharp_povm)
from qdtomo.errors import ValidationError

reflectivity = st.floats(0.05, 0.95)
trees = st.lists(reflectivity, min_size=1, max_size=3).map(SplitterTree)


def brute_force_clicks(tree, k):
    """Distribution of occupied bins when k photons are routed independently."""
    probs = []
    for path in itertools.product((0, 1), repeat=tree.depth):
        p = 1.0
        for R, bit in zip(tree.reflectivities, path):
            p *= R if bit else 1.0 - R
        probs.append(p)
    out = np.zeros(tree.bins + 1)
    for assign in itertools.product(range(tree.bins), repeat=k):
        w = np.prod([probs[b] for b in assign]) if k else 1.0
        out[len(set(assign))] += w
    return out


def test_apd_examples():
    C = apd_povm(1.0, 10).coeffs
    assert C[0, 0] == 1.0 and np.all(C[1:, 0] == 0.0) and np.all(C[1:, 1] == 1.0)
    assert np.all(apd_povm(0.0, 10).coeffs[:, 0] == 1.0)
    assert apd_povm(0.568, 10).coeffs[2, 0] == pytest.approx(0.432 ** 2, abs=1e-15)
    with pytest.raises(ValidationError):
        apd_povm(1.2)


def test_binning_small_examples():
    B2 = binning_recursion(SplitterTree((0.5,)), 10)
    assert np.array_equal(B2[0], np.eye(1, 3)[0])
    assert B2[2, 1] == pytest.approx(0.5, abs=1e-15)
    B8 = binning_recursion(SplitterTree.balanced(8), 10)
    assert B8[2, 1] == pytest.approx(0.125, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(trees)
def test_binning_rows_normalised_and_causal(tree):
    B = binning_recursion(tree, 60)
    assert np.abs(B.sum(axis=1) - 1.0).max() <= 1e-12
    k, j = np.indices(B.shape)
    assert np.all(B[j > k] == 0.0)
    assert np.all(B >= 0.0)


@pytest.mark.parametrize("refl", [(0.5,), (0.5, 0.5), (0.5, 0.5, 0.5), MEASURED_REFLECTIVITIES,
                                  (0.3, 0.8)])
def test_binning_equals_brute_force(refl):
    tree = SplitterTree(refl)
    B = binning_recursion(tree, 6)
    for k in range(7):
        ref = brute_force_clicks(tree, k)
        assert np.abs(B[k] - ref[: B.shape[1]]).max() < 1e-13


def test_splitter_tree_validation():
    with pytest.raises(ValidationError):
        SplitterTree((1.0,))
    with pytest.raises(ValidationError):
        SplitterTree.balanced(6)


@settings(max_examples=30)
@given(st.floats(0.0, 1.0))
def test_loss_matrix_columns(eta):
    L = loss_matrix(eta, 60)
    assert np.abs(L.sum(axis=0) - 1.0).max() <= 1e-12
    assert np.all(np.tril(L, -1) == 0.0)


def test_loss_matrix_examples():
    assert np.array_equal(loss_matrix(1.0, 10), np.eye(11))
    assert np.allclose(loss_matrix(0.5, 4)[:3, 2], [0.25, 0.5, 0.25], atol=1e-15)


def test_lossy_tmd_limits():
    tree = SplitterTree.balanced(8)
    assert np.allclose(lossy_tmd_povm(tree, 1.0, 30).coeffs, binning_recursion(tree, 30), atol=1e-15)
    assert np.all(lossy_tmd_povm(tree, 0.0, 30).coeffs[:, 0] == 1.0)
    C = lossy_tmd_povm(tree, 0.48, 60).coeffs
    k, j = np.indices(C.shape)
    assert np.all(C[k < j] == 0.0)


@settings(max_examples=25, deadline=None)
@given(trees, st.floats(0.0, 1.0))
def test_lossy_tmd_is_a_povm(tree, eta):
    assert lossy_tmd_povm(tree, eta, 40).is_feasible(1e-12, 1e-12)


@settings(max_examples=20, deadline=None)
@given(trees, st.floats(0.05, 0.95))
def test_loss_propagates_support_upward(tree, eta):
    C = lossy_tmd_povm(tree, eta, 40).coeffs
    nz = C > 0
    assert np.all(nz[1:][nz[:-1]])


def test_zoo_perfect_number():
    C = povm_zoo("perfect_number").coeffs
    assert C.shape == (61, 9)
    for n in range(8):
        assert np.array_equal(C[:, n], np.eye(61)[n])
    assert np.all(C[8:, 8] == 1.0)


def test_zoo_sharp_is_complete():
    C = povm_zoo("sharp_artificial").coeffs
    assert np.abs(C.sum(axis=1) - 1.0).max() == 0.0
    assert C[0, 0] == C[2, 0] == 1.0 and C[8, 8] == 0.5 and np.all(C[9:, 8] == 1.0)


def test_zoo_sharp_with_loss_fills_next_level():
    C = povm_zoo("sharp_artificial_loss_20").coeffs
    nz = C > 0
    assert np.all(nz[1:][nz[:-1]])
    assert np.allclose(C, loss_matrix(0.8, 60).T @ sharp_povm(60).coeffs)


def test_zoo_lossy_tmd_uses_measured_tree():
    ref = lossy_tmd_povm(SplitterTree(MEASURED_REFLECTIVITIES), LOSSY_TMD_EFFICIENCY, 60)
    assert np.array_equal(povm_zoo("lossy_tmd_52").coeffs, ref.coeffs)
    assert povm_zoo("lossless_tmd").N == 9


def test_zoo_unknown_case():
    with pytest.raises(ValidationError):
        povm_zoo("pnr")


def test_perfect_number_catch_all():
    C = perfect_number_povm(4, 6).coeffs
    assert np.array_equal(C[:, 3], [0, 0, 0, 1, 1, 1, 1])
