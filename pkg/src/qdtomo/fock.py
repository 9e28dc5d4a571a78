"""Truncated Fock-space primitives: probes, response matrices, forward model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, pdtrc

from .errors import DimensionMismatch, QuadratureFailure, TruncationInsufficient, ValidationError

TAIL_TOL = 1e-6
DEFAULT_M = 60


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FockDiagonalPOVM:
    """POVM whose elements are diagonal in the number basis.

    ``coeffs[k, n]`` is the weight of ``|k><k|`` in outcome ``n``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coeffs)
        if c.ndim != 2 or c.shape[0] < 2 or c.shape[1] < 1:
            raise ValidationError(f"coefficient matrix must be (M+1) x N with M >= 1, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def N(self) -> int:
        return self.coeffs.shape[1]

    def element(self, n: int) -> np.ndarray:
        return self.coeffs[:, n]

    def feasibility(self) -> tuple[float, float]:
        """(most negative entry clipped at 0, worst row-sum deviation)."""
        neg = float(max(0.0, -self.coeffs.min()))
        dev = float(np.abs(self.coeffs.sum(axis=1) - 1.0).max())
        return neg, dev

    def is_feasible(self, eps_pos=1e-9, eps_sum=1e-6) -> bool:
        neg, dev = self.feasibility()
        return neg <= eps_pos and dev <= eps_sum


@dataclass(frozen=True)
class ProbeEnsemble:
    intensities: np.ndarray
    kind: str = "pure"
    sigma_rel: float = 0.02

    def __post_init__(self):
        x = _frozen(self.intensities)
        if x.ndim != 1 or x.size == 0:
            raise ValidationError("intensities must be a non-empty 1-D array")
        if not np.all(np.isfinite(x)):
            raise ValidationError("intensities must be finite")
        if np.any(x < 0):
            raise ValidationError("intensities must be nonnegative")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("intensities must be strictly increasing")
        if self.kind not in ("pure", "mixed"):
            raise ValidationError(f"unknown probe kind {self.kind!r}")
        if not (np.isfinite(self.sigma_rel) and self.sigma_rel >= 0):
            raise ValidationError("sigma_rel must be >= 0")
        object.__setattr__(self, "intensities", x)

    @property
    def D(self) -> int:
        return self.intensities.size

    @classmethod
    def grid(cls, xmax, count, spacing="linear", xmin=None, kind="pure", sigma_rel=0.02):
        """Probe grid on (0, xmax].

        ``linear`` is uniform in intensity, ``amplitude`` uniform in |alpha|
        and ``log`` geometric between ``xmin`` and ``xmax``.
        """
        if count < 1 or xmax <= 0:
            raise ValidationError("need count >= 1 and xmax > 0")
        if spacing == "linear":
            lo = xmax / count if xmin is None else xmin
            x = np.linspace(lo, xmax, count)
        elif spacing == "amplitude":
            lo = np.sqrt(xmax) / count if xmin is None else np.sqrt(xmin)
            x = np.linspace(lo, np.sqrt(xmax), count) ** 2
        elif spacing == "log":
            lo = xmax * 1e-3 if xmin is None else xmin
            if lo <= 0:
                raise ValidationError("log spacing needs xmin > 0")
            x = np.geomspace(lo, xmax, count)
        else:
            raise ValidationError(f"unknown spacing {spacing!r}")
        return cls(x, kind=kind, sigma_rel=sigma_rel)


@dataclass(frozen=True)
class ResponseMatrix:
    F: np.ndarray
    tail_mass: np.ndarray
    probes: Optional[ProbeEnsemble] = None

    def __post_init__(self):
        object.__setattr__(self, "F", _frozen(self.F))
        object.__setattr__(self, "tail_mass", _frozen(self.tail_mass))

    @property
    def M(self) -> int:
        return self.F.shape[1] - 1


@dataclass(frozen=True)
class StatisticsMatrix:
    P: np.ndarray
    trials: Optional[np.ndarray] = None
    probes: Optional[ProbeEnsemble] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        P = _frozen(self.P)
        if P.ndim != 2:
            raise ValidationError("statistics must be a D x N matrix")
        object.__setattr__(self, "P", P)
        if self.trials is not None:
            t = np.array(self.trials, dtype=np.int64).reshape(-1)
            if t.size == 1:
                t = np.full(P.shape[0], t[0])
            t.setflags(write=False)
            object.__setattr__(self, "trials", t)

    @property
    def D(self) -> int:
        return self.P.shape[0]

    @property
    def N(self) -> int:
        return self.P.shape[1]


def poisson_rows(x, M):
    """Poisson(x_i) probabilities for k = 0..M, evaluated through log-gamma."""
    x = np.asarray(x, dtype=np.float64)[..., None]
    k = np.arange(M + 1)
    pos = x > 0
    with np.errstate(divide="ignore"):
        lx = np.log(np.where(pos, x, 1.0))
    logF = -x + k * lx - gammaln(k + 1.0)
    F = np.where(pos, np.exp(logF), (k == 0).astype(np.float64))
    return F


def _check_tail(tail, tail_tol, x):
    bad = np.flatnonzero(tail > tail_tol)
    if bad.size:
        i = bad[0]
        raise TruncationInsufficient(
            f"probe {i} (x={x[i]:.6g}) leaves tail mass {tail[i]:.3g} > {tail_tol:g}; increase M")


def build_pure_response(probes: ProbeEnsemble, M: int = DEFAULT_M, tail_tol: float = TAIL_TOL) -> ResponseMatrix:
    if M < 1:
        raise ValidationError("M must be >= 1")
    x = probes.intensities
    F = poisson_rows(x, M)
    # survival function rather than 1 - sum(F): no cancellation error
    tail = pdtrc(M, x)
    _check_tail(tail, tail_tol, x)
    return ResponseMatrix(F, tail, probes)


def _mixed_row_quad(alpha, gamma, M, nodes):
    lo = max(0.0, alpha - 6.0 * gamma)
    hi = alpha + 6.0 * gamma
    t, w = np.polynomial.legendre.leggauss(nodes)
    b = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w * np.exp(-((b - alpha) ** 2) / (2.0 * gamma * gamma))
    return (w @ poisson_rows(b * b, M)) / w.sum()


def mixed_row(x, sigma_rel, M, tol=1e-9, max_nodes=4096):
    """Diagonal of the phase-averaged Gaussian amplitude mixture centred at sqrt(x).

    Gauss-Legendre with doubling node count until two successive rules agree
    within ``tol``.
    """
    alpha = np.sqrt(x)
    gamma = sigma_rel * alpha / 2.0
    if gamma == 0.0:
        return poisson_rows(x, M)
    nodes = 32
    prev = _mixed_row_quad(alpha, gamma, M, nodes)
    while nodes < max_nodes:
        nodes *= 2
        cur = _mixed_row_quad(alpha, gamma, M, nodes)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur
        prev = cur
    raise QuadratureFailure(f"mixed response at x={x:.6g} did not reach {tol:g}")


def build_mixed_response(probes: ProbeEnsemble, M: int = DEFAULT_M, tail_tol: float = TAIL_TOL,
                         quad_tol: float = 1e-9) -> ResponseMatrix:
    if M < 1:
        raise ValidationError("M must be >= 1")
    if probes.kind != "mixed":
        raise ValidationError("build_mixed_response needs a mixed probe ensemble")
    if probes.sigma_rel <= 0:
        raise ValidationError("mixed probes need sigma_rel > 0")
    x = probes.intensities
    F = np.array([mixed_row(xi, probes.sigma_rel, M, quad_tol) for xi in x])
    tail = np.maximum(1.0 - F.sum(axis=1), 0.0)
    _check_tail(tail, tail_tol, x)
    return ResponseMatrix(F, tail, probes)


def build_response(probes: ProbeEnsemble, M: int = DEFAULT_M, tail_tol: float = TAIL_TOL) -> ResponseMatrix:
    if probes.kind == "mixed":
        return build_mixed_response(probes, M, tail_tol)
    return build_pure_response(probes, M, tail_tol)


def predict_statistics(povm: FockDiagonalPOVM, F: ResponseMatrix) -> StatisticsMatrix:
    if F.F.shape[1] != povm.coeffs.shape[0]:
        raise DimensionMismatch(
            f"response has {F.F.shape[1]} Fock columns, POVM has {povm.coeffs.shape[0]} levels")
    return StatisticsMatrix(F.F @ povm.coeffs, probes=F.probes)


def sample_statistics(P: StatisticsMatrix, J: int, seed: int) -> StatisticsMatrix:
    """Replace each row by multinomial frequencies over ``J`` trials.

    Rows are renormalised first, so the truncation tail is redistributed
    rather than reported as a missing outcome.
    """
    if J < 1:
        raise ValidationError("J must be >= 1")
    p = np.clip(P.P, 0.0, None)
    p = p / p.sum(axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(int(J), p)
    meta = dict(P.meta)
    meta.update(J=int(J), seed=int(seed))
    return StatisticsMatrix(counts / float(J), trials=np.full(P.D, int(J)), probes=P.probes, meta=meta)
