"""Detector forward models: APD, time-multiplexed detector, loss, and a small
zoo of benchmark POVMs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import kernels
from .errors import ValidationError
from .fock import DEFAULT_M, FockDiagonalPOVM

MEASURED_REFLECTIVITIES = (0.5018, 0.5060, 0.4192)
# 52.1 % overall loss
LOSSY_TMD_EFFICIENCY = 0.479

ZOO_CASES = ("lossless_tmd", "lossy_tmd_52", "perfect_number", "sharp_artificial",
             "sharp_artificial_loss_20")


@dataclass(frozen=True)
class SplitterTree:
    """Binary splitter cascade; one reflectivity per stage gives 2**depth bins."""

    reflectivities: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in self.reflectivities)
        if not r:
            raise ValidationError("a splitter tree needs at least one stage")
        for v in r:
            if not 0.0 < v < 1.0:
                raise ValidationError(f"reflectivity {v} outside (0, 1)")
        object.__setattr__(self, "reflectivities", r)

    @property
    def depth(self) -> int:
        return len(self.reflectivities)

    @property
    def bins(self) -> int:
        return 2 ** self.depth

    @classmethod
    def balanced(cls, bins: int) -> "SplitterTree":
        depth = int(round(np.log2(bins)))
        if bins < 2 or 2 ** depth != bins:
            raise ValidationError(f"bin count must be a power of two >= 2, got {bins}")
        return cls((0.5,) * depth)


def _check_eta(eta):
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"efficiency {eta} outside [0, 1]")


def apd_povm(eta: float, M: int = DEFAULT_M) -> FockDiagonalPOVM:
    _check_eta(eta)
    k = np.arange(M + 1)
    off = (1.0 - eta) ** k
    return FockDiagonalPOVM(np.column_stack([off, 1.0 - off]))


def binning_recursion(tree: SplitterTree, M: int = DEFAULT_M) -> np.ndarray:
    """Click-count distribution ``B[k, j]`` of a multiplexer with ``tree.bins`` bins.

    Starts from the two-bin unit of the first stage and doubles once per
    further stage. Rows are indexed by incident photons, columns by clicks.
    """
    if M < 1:
        raise ValidationError("M must be >= 1")
    r = tree.reflectivities[0]
    k = np.arange(M + 1)
    B = np.zeros((M + 1, 3))
    B[0, 0] = 1.0
    one = (1.0 - r) ** k[1:] + r ** k[1:]
    B[1:, 1] = one
    B[1:, 2] = 1.0 - one
    for r in tree.reflectivities[1:]:
        B = kernels.double_bins(B, r)
    return B


def loss_matrix(eta: float, M: int = DEFAULT_M) -> np.ndarray:
    """``L[k', k]``: probability that ``k'`` of ``k`` photons survive."""
    _check_eta(eta)
    k = np.arange(M + 1)
    kp = k[:, None]
    kk = k[None, :]
    valid = kp <= kk
    if eta == 1.0:
        return np.eye(M + 1)
    if eta == 0.0:
        L = np.zeros((M + 1, M + 1))
        L[0, :] = 1.0
        return L
    d = np.where(valid, kk - kp, 0)
    logL = gammaln(kk + 1.0) - gammaln(kp + 1.0) - gammaln(d + 1.0) \
        + kp * np.log(eta) + d * np.log1p(-eta)
    return np.where(valid, np.exp(logL), 0.0)


def lossy_tmd_povm(tree: SplitterTree, eta: float, M: int = DEFAULT_M) -> FockDiagonalPOVM:
    B = binning_recursion(tree, M)
    return FockDiagonalPOVM(loss_matrix(eta, M).T @ B)


def perfect_number_povm(N: int = 9, M: int = DEFAULT_M) -> FockDiagonalPOVM:
    """``pi_n = |n><n|`` for n < N-1, the last outcome collects everything above."""
    C = np.zeros((M + 1, N))
    for k in range(M + 1):
        C[k, min(k, N - 1)] = 1.0
    return FockDiagonalPOVM(C)


def sharp_povm(M: int = DEFAULT_M) -> FockDiagonalPOVM:
    """Artificial nine-outcome POVM with isolated spikes.

    Level 7 is shared equally between outcomes 3 and 7 so that every level
    sums to one.
    """
    if M < 9:
        raise ValidationError("the sharp POVM needs M >= 9")
    C = np.zeros((M + 1, 9))
    C[0, 0] = C[2, 0] = 1.0
    C[1, 1] = 1.0
    C[3, 1] = C[3, 2] = 0.5
    C[4, 2] = C[5, 2] = 1.0
    C[7, 3] = 0.5
    C[6, 4] = C[8, 4] = 0.25
    C[6, 5] = C[8, 5] = 0.25
    C[6, 6] = 0.5
    C[7, 7] = 0.5
    C[8, 8] = 0.5
    C[9:, 8] = 1.0
    return FockDiagonalPOVM(C)


def povm_zoo(case: str, M: int = DEFAULT_M) -> FockDiagonalPOVM:
    tree = SplitterTree(MEASURED_REFLECTIVITIES)
    if case == "lossless_tmd":
        return lossy_tmd_povm(tree, 1.0, M)
    if case == "lossy_tmd_52":
        return lossy_tmd_povm(tree, LOSSY_TMD_EFFICIENCY, M)
    if case == "perfect_number":
        return perfect_number_povm(9, M)
    if case == "sharp_artificial":
        return sharp_povm(M)
    if case == "sharp_artificial_loss_20":
        return FockDiagonalPOVM(loss_matrix(0.8, M).T @ sharp_povm(M).coeffs)
    raise ValidationError(f"unknown zoo case {case!r}; choose from {', '.join(ZOO_CASES)}")
