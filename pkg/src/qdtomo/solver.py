"""Constrained reconstruction of Fock-diagonal POVMs.

The feasible set (entrywise nonnegative, every Fock row summing to one) is a
product of probability simplices, so the solver alternates an exact
quadratic prox step with an exact row-wise simplex projection (ADMM).

Two objectives are supported:

``unsquared`` (default)
    ``||(P - F T) W|| + g(T)``. For a fixed residual norm ``r*`` at the
    optimum, its minimiser is also the minimiser of the smooth problem
    ``||(P - F T) W||^2 + s g(T)`` with ``s = 2 r*``. The solver therefore
    searches the scalar ``s`` for this fixed point, each trial being a
    squared-norm solve warm-started from the previous one.
``squared``
    ``||(P - F T) W||^2 + g(T)`` solved directly.

Here ``g = y S + c ||diag(1/j) T||^2`` with ``S`` the sum of squared
differences between neighbouring Fock levels.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import DimensionMismatch, InfeasibleInput, ValidationError
from .fock import (FockDiagonalPOVM, ProbeEnsemble, ResponseMatrix, StatisticsMatrix,
                   TAIL_TOL, mixed_row, poisson_rows)

log = logging.getLogger(__name__)

REGULARIZERS = ("none", "smoothing", "damping", "weighting")
NORMS = ("unsquared", "squared")
INITS = ("uniform", "continuation")


@dataclass(frozen=True)
class SolverConfig:
    regularizer: str = "smoothing"
    y: float = 0.1
    damping_c: float = 0.03
    weights: Optional[tuple] = None
    eps_primal: float = 1e-8
    eps_dual: float = 1e-6
    max_iter: int = 50_000
    noise_runs: int = 0
    noise_sigma_rel: float = 0.02
    seed: int = 0
    norm: str = "unsquared"
    init: str = "continuation"
    continuation_y: float = 0.1
    alpha: float = 1.6
    rho_rel: float = 1e-3
    adapt_iters: int = 100
    tail_tol: float = TAIL_TOL

    def __post_init__(self):
        if self.regularizer not in REGULARIZERS:
            raise ValidationError(f"regularizer must be one of {REGULARIZERS}")
        if self.norm not in NORMS:
            raise ValidationError(f"norm must be one of {NORMS}")
        if self.init not in INITS:
            raise ValidationError(f"init must be one of {INITS}")
        if not (self.y >= 0 and self.damping_c >= 0):
            raise ValidationError("y and damping_c must be >= 0")
        if not (self.eps_primal > 0 and self.eps_dual > 0):
            raise ValidationError("tolerances must be > 0")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if self.noise_runs < 0 or self.noise_sigma_rel < 0:
            raise ValidationError("noise_runs and noise_sigma_rel must be >= 0")
        if not 0 < self.alpha < 2:
            raise ValidationError("alpha must lie in (0, 2)")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if any(not (v > 0 and math.isfinite(v)) for v in w):
                raise ValidationError("weights must be positive")
            object.__setattr__(self, "weights", w)
        if self.regularizer == "weighting" and self.weights is None:
            raise ValidationError("the weighting regularizer needs weights")

    def replace(self, **kw) -> "SolverConfig":
        d = asdict(self)
        d.update(kw)
        return SolverConfig(**d)

    @property
    def smoothing_weight(self) -> float:
        return self.y if self.regularizer == "smoothing" else 0.0

    @property
    def damping_weight(self) -> float:
        return self.damping_c if self.regularizer == "damping" else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights) if self.weights is not None else None
        return d


@dataclass
class ReconstructionReport:
    povm: FockDiagonalPOVM
    residual: float
    penalty: float
    objective: float
    iterations: int
    kkt_residual: float
    primal_residual: float
    converged: bool
    effective_weight: float = 0.0
    history: np.ndarray = field(default_factory=lambda: np.empty(0))
    runs: list = field(default_factory=list)
    failed_runs: int = 0

    def summary(self) -> dict:
        return {
            "residual": self.residual,
            "penalty": self.penalty,
            "objective": self.objective,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "primal_residual": self.primal_residual,
            "converged": self.converged,
            "effective_weight": self.effective_weight,
            "noise_runs": len(self.runs),
            "failed_runs": self.failed_runs,
        }


# ---------------------------------------------------------------------------
# penalties


def difference_operator(M: int) -> np.ndarray:
    return np.diff(np.eye(M + 1), axis=0)


def smoothing_penalty(theta) -> float:
    """Sum over outcomes of squared differences between adjacent Fock levels."""
    theta = np.asarray(theta.coeffs if isinstance(theta, FockDiagonalPOVM) else theta, float)
    return float(np.sum(np.diff(theta, axis=0) ** 2))


def damping_diagonal(M: int) -> np.ndarray:
    d = np.zeros(M + 1)
    d[1:] = 1.0 / np.arange(1, M + 1)
    return d


def damping_penalty(theta, c: float = 1.0) -> float:
    """``c * ||diag(1/j) theta||^2`` with the vacuum row left undamped."""
    theta = np.asarray(theta.coeffs if isinstance(theta, FockDiagonalPOVM) else theta, float)
    d = damping_diagonal(theta.shape[0] - 1)
    return float(c * np.sum((d[:, None] * theta) ** 2))


def penalty_value(theta, cfg: SolverConfig) -> float:
    return cfg.smoothing_weight * smoothing_penalty(theta) + damping_penalty(theta, cfg.damping_weight)


def _penalty_hessian(M, cfg):
    """Matrix G with g(T) = sum_n t_n' G t_n."""
    G = np.zeros((M + 1, M + 1))
    if cfg.smoothing_weight:
        Dm = difference_operator(M)
        G += cfg.smoothing_weight * (Dm.T @ Dm)
    if cfg.damping_weight:
        G += cfg.damping_weight * np.diag(damping_diagonal(M) ** 2)
    return G


# ---------------------------------------------------------------------------
# core solve


class _Problem:
    """Squared-norm problem data with cached per-column eigendecompositions."""

    def __init__(self, P, F, cfg):
        self.P = P
        self.F = F
        self.cfg = cfg
        K = F.shape[1]
        N = P.shape[1]
        self.w = np.ones(N) if cfg.weights is None else np.asarray(cfg.weights, float)
        if self.w.size != N:
            raise DimensionMismatch(f"{self.w.size} weights for {N} outcomes")
        self.FtF = F.T @ F
        self.q = 2.0 * (F.T @ P) * (self.w ** 2)
        self.G = _penalty_hessian(K - 1, cfg)
        self.has_penalty = bool(np.any(self.G))
        self._eig = {}

    def eig(self, s):
        if s not in self._eig:
            V = []
            lam = []
            cache = {}
            for wn in self.w:
                if wn not in cache:
                    H = 2.0 * (wn * wn * self.FtF + s * self.G)
                    lv, Vv = np.linalg.eigh(H)
                    cache[wn] = (np.maximum(lv, 0.0), Vv)
                lv, Vv = cache[wn]
                lam.append(lv)
                V.append(Vv)
            self._eig = {s: (np.array(V), np.array(lam))}
        return self._eig[s]

    def residual(self, Z):
        return float(np.linalg.norm((self.P - self.F @ Z) * self.w))

    def solve(self, s, Z0, U0=None, rho=None, max_iter=None):
        V, lam = self.eig(s)
        h = float(lam.max())
        if rho is None:
            rho = self.cfg.rho_rel * h
        U0 = np.zeros_like(Z0) if U0 is None else U0
        out = kernels.admm(V, lam, self.q, Z0, U0, rho, alpha=self.cfg.alpha,
                           max_iter=self.cfg.max_iter if max_iter is None else max_iter,
                           eps_p=self.cfg.eps_primal, eps_d=self.cfg.eps_dual,
                           adapt_iters=self.cfg.adapt_iters)
        Z, U, X, rho, its, r, kkt, hist = out
        return Z, U, rho, its, r, kkt, hist


def _validate(P, F):
    if P.ndim != 2 or F.ndim != 2:
        raise DimensionMismatch("statistics and response must be matrices")
    if P.shape[0] != F.shape[0]:
        raise DimensionMismatch(f"{P.shape[0]} statistics rows but {F.shape[0]} probes")
    if not np.all(np.isfinite(P)):
        raise InfeasibleInput("statistics contain non-finite values")
    if P.min() < -1e-9 or P.max() > 1 + 1e-9:
        raise InfeasibleInput("statistics entries must lie in [0, 1]")
    if F.shape[0] < F.shape[1]:
        log.warning("only %d probes for %d Fock levels; reconstruction is underdetermined",
                    F.shape[0], F.shape[1])


def _as_arrays(P, F):
    P = P.P if isinstance(P, StatisticsMatrix) else np.asarray(P, float)
    F = F.F if isinstance(F, ResponseMatrix) else np.asarray(F, float)
    return P, F


def reconstruct(P, F, cfg: Optional[SolverConfig] = None, init=None) -> ReconstructionReport:
    """Reconstruct the POVM from statistics ``P`` and response ``F``.

    Args:
        P: StatisticsMatrix or D x N array.
        F: ResponseMatrix or D x (M+1) array.
        cfg: solver settings; defaults to smoothing with y = 0.1.
        init: optional (M+1) x N starting point, projected onto the feasible set.

    Returns:
        ReconstructionReport; ``converged`` is False when the iteration limit
        was hit before both tolerances were met.
    """
    cfg = cfg or SolverConfig()
    P, F = _as_arrays(P, F)
    _validate(P, F)
    prob = _Problem(P, F, cfg)
    K, N = F.shape[1], P.shape[1]

    if init is not None:
        Z0 = kernels.project_rows(np.asarray(init, float))
        if Z0.shape != (K, N):
            raise DimensionMismatch(f"initial point has shape {Z0.shape}, expected {(K, N)}")
    elif cfg.init == "continuation" and not prob.has_penalty:
        warm = reconstruct(P, F, cfg.replace(regularizer="smoothing", y=cfg.continuation_y,
                                             init="uniform"))
        Z0 = warm.povm.coeffs.copy()
    else:
        Z0 = np.full((K, N), 1.0 / N)

    if cfg.norm == "squared" or not prob.has_penalty:
        s = 1.0
        Z, U, rho, its, r, kkt, hist = prob.solve(s, Z0)
        total = its
    else:
        Z, s, total, r, kkt, hist = _fixed_point(prob, Z0)

    conv = bool(r <= cfg.eps_primal and kkt <= cfg.eps_dual)
    res = prob.residual(Z)
    pen = penalty_value(Z, cfg)
    obj = (res if cfg.norm == "unsquared" else res * res) + pen
    if not conv:
        log.warning("solver stopped after %d iterations: primal %.3g, kkt %.3g", total, r, kkt)
    return ReconstructionReport(FockDiagonalPOVM(Z), res, pen, obj, int(total), float(kkt),
                                float(r), conv, float(s), hist)


def _fixed_point(prob, Z0, tol=1e-3):
    """Find s with s = 2 * residual(s) for the unsquared objective.

    Every trial is a full squared-norm solve warm-started from the previous
    trial's primal and dual state.
    """
    state = {"Z": Z0, "U": None, "rho": None, "total": 0, "last": None}
    floor = math.log(1e-12)

    def res_at(log_s):
        s = math.exp(log_s)
        Z, U, rho, its, r, kkt, hist = prob.solve(s, state["Z"])
        state.update(Z=Z, U=U, rho=rho, last=(log_s, Z, s, r, kkt, hist))
        state["total"] += its
        log.debug("trial s=%.6g iterations=%d residual=%.6g kkt=%.3g", s, its, prob.residual(Z), kkt)
        return prob.residual(Z)

    def psi(log_s):
        res = res_at(log_s)
        return log_s - math.log(2.0 * res) if res > 0 else math.inf

    # psi is increasing in log s with slope in (0, 1]: a safeguarded secant
    # search converges in a handful of solves
    u = math.log(max(2.0 * prob.residual(Z0), 1e-300))
    f = psi(u)
    lo, hi = (-math.inf, None), (math.inf, None)
    prev = None
    for _ in range(40):
        if f == 0.0 or not math.isfinite(f):
            break
        if f < 0:
            lo = (u, f)
        else:
            hi = (u, f)
        if prev is not None and prev[1] != f:
            step = -f * (u - prev[0]) / (f - prev[1])
        else:
            step = -f
        nxt = u + step
        # stay inside the bracket once one exists
        if math.isfinite(lo[0]) and math.isfinite(hi[0]) and not lo[0] < nxt < hi[0]:
            nxt = 0.5 * (lo[0] + hi[0])
        nxt = max(nxt, floor)
        if abs(nxt - u) < tol:
            break
        if nxt == floor and u == floor:
            break
        prev = (u, f)
        u = nxt
        f = psi(u)
    log_s = u

    if state["last"] is None or state["last"][0] != log_s:
        res_at(log_s)
    _, Z, s, r, kkt, hist = state["last"]
    return Z, s, state["total"], r, kkt, hist


def weighted_reconstruct(P, F, Dmat, cfg: Optional[SolverConfig] = None) -> ReconstructionReport:
    """Reconstruction with the data residual multiplied on the right by ``Dmat``."""
    cfg = cfg or SolverConfig(regularizer="none")
    D = np.asarray(Dmat, float)
    if D.ndim == 2:
        if np.any(D - np.diag(np.diag(D))):
            raise ValidationError("weighting matrix must be diagonal")
        D = np.diag(D)
    reg = "weighting" if cfg.regularizer == "none" else cfg.regularizer
    return reconstruct(P, F, cfg.replace(weights=tuple(D), regularizer=reg))


# ---------------------------------------------------------------------------
# noise averaging


def response_for_intensities(x, M, kind="pure", sigma_rel=0.02, tail_tol=TAIL_TOL) -> ResponseMatrix:
    """Response rows for arbitrary (unsorted) intensities; used for perturbed probes."""
    x = np.asarray(x, float)
    if kind == "mixed":
        F = np.array([mixed_row(xi, sigma_rel, M) for xi in x])
    else:
        F = poisson_rows(x, M)
    tail = np.maximum(1.0 - F.sum(axis=1), 0.0)
    if np.any(tail > tail_tol):
        from .errors import TruncationInsufficient
        raise TruncationInsufficient(f"perturbed probes leave tail mass {tail.max():.3g}")
    return ResponseMatrix(F, tail)


def run_seeds(seed: int, runs: int) -> list:
    """Independent child seeds, one per run, fixed by ``(seed, run index)``."""
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(runs)]


def _noise_run(args):
    P, x, kind, sigma_rel, M, cfg, run_seed = args
    rng = np.random.default_rng(run_seed)
    xp = np.abs(x * (1.0 + cfg.noise_sigma_rel * rng.standard_normal(x.size)))
    try:
        F = response_for_intensities(xp, M, kind, sigma_rel, cfg.tail_tol)
        rep = reconstruct(P, F, cfg.replace(noise_runs=0))
    except Exception as exc:  # a failed run is dropped, not fatal
        return None, repr(exc)
    return rep, None


def noise_average_reconstruct(P, probes: ProbeEnsemble, cfg: SolverConfig, M: int = 60,
                              jobs: int = 1) -> ReconstructionReport:
    """Average reconstructions over randomly perturbed probe intensities.

    Each run multiplies the intensities by ``1 + N(0, noise_sigma_rel)``,
    rebuilds the response, and solves. The entrywise mean is projected back
    onto the feasible set. Run seeds depend only on ``(cfg.seed, run)``, so
    the result does not depend on ``jobs``.
    """
    if cfg.noise_runs < 2:
        raise ValidationError("noise averaging needs noise_runs >= 2")
    P = P.P if isinstance(P, StatisticsMatrix) else np.asarray(P, float)
    x = probes.intensities
    tasks = [(P, x, probes.kind, probes.sigma_rel, M, cfg, s)
             for s in run_seeds(cfg.seed, cfg.noise_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_noise_run, tasks))
    else:
        results = [_noise_run(t) for t in tasks]
    reps = [r for r, _ in results if r is not None]
    if not reps:
        raise ValidationError("every noise-averaging run failed: " + results[0][1])
    mean = np.mean([r.povm.coeffs for r in reps], axis=0)
    avg = kernels.project_rows(mean)
    F0 = response_for_intensities(x, M, probes.kind, probes.sigma_rel, math.inf).F
    res = float(np.linalg.norm(P - F0 @ avg))
    pen = penalty_value(avg, cfg)
    return ReconstructionReport(
        FockDiagonalPOVM(avg), res, pen, res + pen,
        sum(r.iterations for r in reps), max(r.kkt_residual for r in reps),
        max(r.primal_residual for r in reps), all(r.converged for r in reps),
        runs=[r.povm for r in reps], failed_runs=len(results) - len(reps))
