"""Figures of merit for reconstructed POVMs and the sweep harnesses built on them."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import sqrtm

from .errors import DimensionMismatch, ValidationError, ZeroElement
from .fock import FockDiagonalPOVM
from .simulation import Scenario, simulate
from .solver import SolverConfig, reconstruct, run_seeds


# ---------------------------------------------------------------------------
# Wigner functions


@dataclass(frozen=True)
class WignerRadialProfile:
    r: np.ndarray
    W: np.ndarray
    n: int


def laguerre_table(kmax: int, x) -> np.ndarray:
    """``L_k(x)`` for k = 0..kmax by the three-term upward recurrence."""
    x = np.asarray(x, dtype=np.float64)
    L = np.empty((kmax + 1,) + x.shape)
    L[0] = 1.0
    if kmax >= 1:
        L[1] = 1.0 - x
    for k in range(1, kmax):
        L[k + 1] = ((2 * k + 1 - x) * L[k] - k * L[k - 1]) / (k + 1)
    return L


def fock_wigner(kmax: int, r) -> np.ndarray:
    """Radial Wigner functions of ``|k><k|``, k = 0..kmax, hbar = 1."""
    r = np.asarray(r, dtype=np.float64)
    L = laguerre_table(kmax, 2.0 * r * r)
    sign = (-1.0) ** np.arange(kmax + 1)
    return sign.reshape((-1,) + (1,) * r.ndim) * np.exp(-r * r) * L / math.pi


def wigner_radial(povm: FockDiagonalPOVM, n: int, radii=None) -> WignerRadialProfile:
    if not 0 <= n < povm.N:
        raise ValidationError(f"outcome {n} out of range for {povm.N} outcomes")
    r = np.linspace(0.0, 6.0, 400) if radii is None else np.asarray(radii, dtype=np.float64)
    if np.any(r < 0):
        raise ValidationError("radii must be nonnegative")
    W = povm.coeffs[:, n] @ fock_wigner(povm.M, r)
    return WignerRadialProfile(r, W, n)


# ---------------------------------------------------------------------------
# fidelity and distances


def _normalised(a, name):
    a = np.asarray(a, dtype=np.float64)
    tr = a.sum()
    if tr < 1e-12:
        raise ZeroElement(f"element {name} has trace {tr:.3g}")
    return np.clip(a, 0.0, None) / tr


def fidelity(a, b) -> float:
    """Fidelity of two Fock-diagonal elements given by their coefficient vectors.

    After trace normalisation, commuting elements give the squared
    Bhattacharyya coefficient.
    """
    a = _normalised(a, "a")
    b = _normalised(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatch("elements have different truncations")
    return float(min(1.0, np.sum(np.sqrt(a * b)) ** 2))


def uhlmann_fidelity(A, B) -> float:
    """``(Tr sqrt(sqrt(A) B sqrt(A)))^2`` on trace-normalised matrices."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    A = A / np.trace(A).real
    B = B / np.trace(B).real
    sA = sqrtm(A)
    return float(np.trace(sqrtm(sA @ B @ sA)).real ** 2)


def element_fidelities(a: FockDiagonalPOVM, b: FockDiagonalPOVM) -> np.ndarray:
    if a.coeffs.shape != b.coeffs.shape:
        raise DimensionMismatch(f"POVM shapes differ: {a.coeffs.shape} vs {b.coeffs.shape}")
    return np.array([fidelity(a.coeffs[:, n], b.coeffs[:, n]) for n in range(a.N)])


def relative_error(a, b) -> float:
    """``100 * |a - b| / |b|`` in the Frobenius norm."""
    a = np.asarray(a.coeffs if isinstance(a, FockDiagonalPOVM) else a, dtype=np.float64)
    b = np.asarray(b.coeffs if isinstance(b, FockDiagonalPOVM) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    nb = np.linalg.norm(b)
    if nb == 0.0:
        raise ZeroElement("reference has zero norm")
    return float(100.0 * np.linalg.norm(a - b) / nb)


def dark_count_max(povm: FockDiagonalPOVM) -> float:
    """Largest coefficient with fewer photons than clicks (``k < n``)."""
    C = povm.coeffs
    vals = [C[k, n] for n in range(C.shape[1]) for k in range(min(n, C.shape[0]))]
    return float(max(vals)) if vals else 0.0


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepCell:
    axis: float
    repeat: int
    metric: float
    seed: int
    extra: dict = field(default_factory=dict)


@dataclass
class SweepTable:
    kind: str
    case: str
    axis_name: str
    metric_name: str
    cells: list
    config: dict = field(default_factory=dict)

    def values(self, axis=None) -> np.ndarray:
        return np.array([c.metric for c in self.cells if axis is None or c.axis == axis])


def _smoothing_cell(args):
    case, y, scenario, cfg, theo, init = args
    data = simulate(case, scenario)
    c = cfg.replace(regularizer="smoothing", y=y) if y > 0 else cfg.replace(regularizer="none")
    rep = reconstruct(data.stats, data.response, c, init=init)
    err = float(np.linalg.norm(rep.povm.coeffs - theo))
    fids = element_fidelities(rep.povm, data.truth)
    return SweepCell(y, 0, err, scenario.seed,
                     {"fidelities": fids.tolist(), "relative_error": relative_error(rep.povm, data.truth),
                      "converged": rep.converged, "iterations": rep.iterations,
                      "coeffs": rep.povm.coeffs})


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def smoothing_sweep(case: str, y_values: Sequence[float], cfg: Optional[SolverConfig] = None,
                    scenario: Optional[Scenario] = None, jobs: int = 1) -> SweepTable:
    """Reconstruct ``case`` for every smoothing weight; a y = 0 cell is always added.

    The metric is the Frobenius distance to the generating POVM.
    """
    y_values = [float(y) for y in y_values]
    if not y_values:
        raise ValidationError("empty y grid")
    if any(y < 0 for y in y_values) or y_values != sorted(y_values):
        raise ValidationError("y values must be nonnegative and sorted")
    cfg = cfg or SolverConfig()
    scenario = scenario or Scenario()
    grid = y_values if 0.0 in y_values else [0.0] + y_values
    theo = simulate(case, replace(scenario, shots=0)).truth.coeffs
    cells = _map(_smoothing_cell, [(case, y, scenario, cfg, theo, None) for y in grid], jobs)
    return SweepTable("smoothing", case, "y", "frobenius_error", cells,
                      {"solver": cfg.to_dict(), "scenario": scenario.to_dict()})


def _noise_cell(args):
    case, y, delta, rep_idx, seed, scenario, cfg, base = args
    data = simulate(case, scenario)
    probes = data.probes
    rng = np.random.default_rng(seed)
    x = probes.intensities * (1.0 + delta * rng.standard_normal(probes.D))
    from .solver import response_for_intensities

    F = response_for_intensities(x, scenario.M, probes.kind, probes.sigma_rel, math.inf)
    c = cfg.replace(regularizer="smoothing", y=y) if y > 0 else cfg.replace(regularizer="none")
    rep = reconstruct(data.stats, F, c)
    metric = float(np.linalg.norm(rep.povm.coeffs - base))
    return SweepCell(delta, rep_idx, metric, seed, {"y": y, "converged": rep.converged})


def noise_resilience_sweep(case: str, deltas: Sequence[float], y_values: Sequence[float],
                           repeats: int = 4, cfg: Optional[SolverConfig] = None,
                           scenario: Optional[Scenario] = None, jobs: int = 1) -> dict:
    """Sensitivity of the reconstruction to miscalibrated probe intensities.

    For every ``y`` and relative error ``delta`` the response is rebuilt from
    intensities scaled by ``1 + N(0, delta)`` and the distance to the
    unperturbed reconstruction (same ``y``) is recorded per repeat.

    Returns:
        dict mapping each y to a SweepTable over delta.
    """
    if repeats < 2:
        raise ValidationError("need at least two repeats")
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ValidationError("empty noise grid")
    cfg = cfg or SolverConfig()
    scenario = scenario or Scenario()
    data = simulate(case, scenario)
    out = {}
    for y in y_values:
        c = cfg.replace(regularizer="smoothing", y=y) if y > 0 else cfg.replace(regularizer="none")
        base = reconstruct(data.stats, data.response, c).povm.coeffs
        tasks = []
        for di, d in enumerate(deltas):
            seeds = run_seeds(cfg.seed * 1000 + di, repeats)
            for r in range(repeats):
                tasks.append((case, y, d, r, seeds[r], scenario, cfg, base))
        cells = _map(_noise_cell, tasks, jobs)
        out[y] = SweepTable("noise", case, "delta", "frobenius_shift", cells,
                            {"y": y, "solver": cfg.to_dict(), "scenario": scenario.to_dict()})
    return out
