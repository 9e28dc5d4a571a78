"""Certified lower bounds on negativity from joint click statistics.

Given local POVM settings and joint outcome frequencies, any Hermitian
witness ``P = sum alpha * (pi_A (x) pi_B^T) + beta * 1`` with spectrum in
[-1, 1] yields ``||rho^Gamma||_1 - 1 >= sum alpha d + beta - 1``. The best
such witness is found by ADMM on the dual program, then re-certified by an
independent eigenvalue computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionCap, DimensionMismatch, InconsistentData, NotConverged, ValidationError
from .fock import FockDiagonalPOVM

MAX_DIM = 64


@dataclass(frozen=True)
class JointData:
    """Local POVM settings for both sides and the joint outcome frequencies.

    ``data[(k, l)][n, m]`` is the frequency of outcome ``n`` under setting
    ``k`` on side A together with outcome ``m`` under setting ``l`` on B.
    """

    dims: tuple
    settings_A: tuple
    settings_B: tuple
    data: dict
    unbounded: bool = False

    def __post_init__(self):
        dA, dB = (int(v) for v in self.dims)
        object.__setattr__(self, "dims", (dA, dB))
        sA = tuple(tuple(np.asarray(e, dtype=complex) for e in s) for s in self.settings_A)
        sB = tuple(tuple(np.asarray(e, dtype=complex) for e in s) for s in self.settings_B)
        object.__setattr__(self, "settings_A", sA)
        object.__setattr__(self, "settings_B", sB)
        object.__setattr__(self, "data", {tuple(k): np.asarray(v, dtype=float)
                                          for k, v in self.data.items()})

    def validate(self, tol: float = 1e-6):
        dA, dB = self.dims
        for side, sets, d in (("A", self.settings_A, dA), ("B", self.settings_B, dB)):
            for k, s in enumerate(sets):
                total = np.zeros((d, d), dtype=complex)
                for e in s:
                    if e.shape != (d, d):
                        raise DimensionMismatch(f"side {side} setting {k}: element shape {e.shape}")
                    if not np.allclose(e, e.conj().T, atol=1e-9):
                        raise ValidationError(f"side {side} setting {k}: element not Hermitian")
                    total += e
                if np.abs(total - np.eye(d)).max() > 1e-9:
                    raise ValidationError(f"side {side} setting {k} does not sum to identity")
        for (k, l), d in self.data.items():
            if not (0 <= k < len(self.settings_A) and 0 <= l < len(self.settings_B)):
                raise ValidationError(f"data for unknown setting pair {(k, l)}")
            if d.shape != (len(self.settings_A[k]), len(self.settings_B[l])):
                raise DimensionMismatch(f"data block {(k, l)} has shape {d.shape}")
            if abs(d.sum() - 1.0) > tol:
                raise InconsistentData(f"data block {(k, l)} sums to {d.sum():.9g}")


@dataclass
class NegativityBound:
    bound: float
    alpha: dict
    beta: float
    witness: np.ndarray
    eigenvalues: np.ndarray
    certified: bool
    iterations: int
    converged: bool
    trivial: bool = False
    meta: dict = field(default_factory=dict)


def _operators(data: JointData):
    ops = []
    keys = []
    obs = []
    for (k, l) in sorted(data.data):
        d = data.data[(k, l)]
        for n, pa in enumerate(data.settings_A[k]):
            for m, pb in enumerate(data.settings_B[l]):
                ops.append(np.kron(pa, pb.T))
                keys.append((k, l, n, m))
                obs.append(d[n, m])
    D = data.dims[0] * data.dims[1]
    ops.append(np.eye(D, dtype=complex))
    obs.append(1.0)
    return ops, keys, np.array(obs)


def certify(ops, c):
    """Spectrum of the witness built from coefficients ``c``."""
    P = sum(ci * A for ci, A in zip(c, ops))
    P = 0.5 * (P + P.conj().T)
    return P, np.linalg.eigvalsh(P)


def negativity_lower_bound(data: JointData, tol: float = 1e-7, max_iter: int = 20_000,
                           rho: float = 1.0, strict: bool = False) -> NegativityBound:
    """Best witness bound on ``||rho^Gamma||_1 - 1`` consistent with ``data``.

    Args:
        data: joint statistics and local settings.
        tol: stopping tolerance on primal and dual ADMM residuals; also the
            tolerance on per-block normalisation of the data.
        max_iter: iteration cap.
        rho: ADMM penalty.
        strict: raise NotConverged instead of returning an unconverged bound.

    Returns:
        NegativityBound. The bound is always certified: if the iterate
        violates the spectral constraint it is rescaled, and it is never
        worse than the trivial witness ``P = 1`` (bound 0).
    """
    if data.unbounded:
        raise ValidationError("witness bounds need finite-support measurements; "
                              "unbounded quadrature observables are not supported")
    dA, dB = data.dims
    if dA * dB > MAX_DIM:
        raise DimensionCap(f"d_A * d_B = {dA * dB} exceeds {MAX_DIM}")
    data.validate(max(tol, 1e-6))
    ops, keys, b = _operators(data)
    D = dA * dB
    # real representation of the linear map c -> sum c_j A_j
    Amat = np.stack([np.concatenate([A.real.ravel(), A.imag.ravel()]) for A in ops], axis=1)
    G = Amat.T @ Amat
    Gp = np.linalg.pinv(G, rcond=1e-10, hermitian=True)
    # a data component along the null space of c -> sum c_j A_j makes the
    # dual unbounded: no Hermitian unit-trace operator reproduces the data
    leak = float(np.abs(b - G @ (Gp @ b)).max())
    if leak > 10 * max(tol, 1e-6):
        raise InconsistentData(f"data violate the linear relations among the measured "
                               f"operators by {leak:.3g} (e.g. signalling marginals)")

    def apply(c):
        v = Amat @ c
        return (v[: D * D] + 1j * v[D * D:]).reshape(D, D)

    def adjoint(M):
        return Amat.T @ np.concatenate([M.real.ravel(), M.imag.ravel()])

    W = np.eye(D, dtype=complex)
    U = np.zeros((D, D), dtype=complex)
    c = np.zeros(len(ops))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        c = Gp @ (b / rho + adjoint(W - U))
        Ac = apply(c)
        V = Ac + U
        V = 0.5 * (V + V.conj().T)
        lam, Q = np.linalg.eigh(V)
        Wn = (Q * np.clip(lam, -1.0, 1.0)) @ Q.conj().T
        U = U + Ac - Wn
        r = np.linalg.norm(Ac - Wn)
        s = rho * np.linalg.norm(Wn - W)
        W = Wn
        if r < tol and s < tol:
            converged = True
            break
    if strict and not converged:
        raise NotConverged(f"dual program not converged after {max_iter} iterations")

    P, ev = certify(ops, c)
    scale = max(1.0, float(np.abs(ev).max()))
    c = c / scale
    value = float(b @ c) - 1.0
    trivial = False
    if value < 0.0:
        c = np.zeros(len(ops))
        c[-1] = 1.0
        value = 0.0
        trivial = True
    P, ev = certify(ops, c)
    certified = bool(ev.min() >= -1 - 1e-9 and ev.max() <= 1 + 1e-9)
    dmax = min(dA, dB) - 1
    if value > dmax + max(tol, 1e-6) * 10:
        raise InconsistentData(f"bound {value:.6g} exceeds the largest possible negativity {dmax}")
    alpha = {key: float(v) for key, v in zip(keys, c[:-1])}
    return NegativityBound(value, alpha, float(c[-1]), P, ev, certified, it, converged, trivial)


def click_data_from_povms(povm_A: FockDiagonalPOVM, povm_B: FockDiagonalPOVM, state,
                          d_cap: int = MAX_DIM) -> JointData:
    """Born-rule joint statistics of two Fock-diagonal detectors on ``state``."""
    dA, dB = povm_A.M + 1, povm_B.M + 1
    if dA * dB > d_cap:
        raise DimensionCap(f"d_A * d_B = {dA * dB} exceeds {d_cap}")
    rho = np.asarray(state, dtype=complex)
    if rho.shape != (dA * dB, dA * dB):
        raise DimensionMismatch(f"state has shape {rho.shape}, expected {(dA * dB, dA * dB)}")
    sA = [np.diag(povm_A.coeffs[:, n]).astype(complex) for n in range(povm_A.N)]
    sB = [np.diag(povm_B.coeffs[:, m]).astype(complex) for m in range(povm_B.N)]
    d = np.array([[np.trace(np.kron(a, b) @ rho).real for b in sB] for a in sA])
    return JointData((dA, dB), (tuple(sA),), (tuple(sB),), {(0, 0): d})


def joint_data_from_state(settings_A, settings_B, state) -> JointData:
    """Exact frequencies for every setting pair; handy for fixtures."""
    rho = np.asarray(state, dtype=complex)
    dA = np.asarray(settings_A[0][0]).shape[0]
    dB = np.asarray(settings_B[0][0]).shape[0]
    data = {}
    for k, sa in enumerate(settings_A):
        for l, sb in enumerate(settings_B):
            data[(k, l)] = np.array([[np.trace(np.kron(a, b) @ rho).real for b in sb] for a in sa])
    return JointData((dA, dB), tuple(tuple(s) for s in settings_A),
                     tuple(tuple(s) for s in settings_B), data)


def pauli_settings():
    """Projective measurements along x, y and z for one qubit."""
    out = []
    for v in ([1, 1], [1, 1j], [1, 0]):
        v = np.array(v, dtype=complex)
        v /= np.linalg.norm(v)
        p = np.outer(v, v.conj())
        out.append((p, np.eye(2) - p))
    return out


def bell_state() -> np.ndarray:
    phi = np.zeros(4, dtype=complex)
    phi[0] = phi[3] = 1 / np.sqrt(2)
    return np.outer(phi, phi.conj())


def werner_state(v: float) -> np.ndarray:
    return v * bell_state() + (1 - v) * np.eye(4) / 4


def werner_negativity(v: float) -> float:
    """``||rho^Gamma||_1 - 1`` for the two-qubit Werner state."""
    return max(0.0, (3 * v - 1) / 2)
