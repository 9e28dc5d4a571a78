"""Synthetic tomography experiments: probe grid, forward model, optional shots."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from .detectors import povm_zoo
from .errors import ValidationError
from .fock import (FockDiagonalPOVM, ProbeEnsemble, ResponseMatrix, StatisticsMatrix,
                   build_response, predict_statistics, sample_statistics)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to regenerate a synthetic data set.

    ``M_gen`` is the truncation used to *generate* statistics. Taking it well
    above the reconstruction truncation ``M`` keeps the photon-number tail
    of the probes in the data, as it would be in a real measurement.
    ``shots = 0`` gives exact probabilities.
    """

    xmax: float = 40.0
    count: int = 100
    spacing: str = "amplitude"
    xmin: Optional[float] = None
    kind: str = "mixed"
    sigma_rel: float = 0.02
    M: int = 60
    M_gen: int = 150
    shots: int = 0
    seed: int = 0
    tail_tol: float = 5e-3
    jitter: float = 0.0

    def probes(self) -> ProbeEnsemble:
        return ProbeEnsemble.grid(self.xmax, self.count, self.spacing, self.xmin, self.kind,
                                  self.sigma_rel)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SyntheticData:
    truth: FockDiagonalPOVM
    probes: ProbeEnsemble
    response: ResponseMatrix
    stats: StatisticsMatrix


def _truth_at(model, M):
    if isinstance(model, str):
        return povm_zoo(model, M)
    C = model.coeffs
    if C.shape[0] - 1 >= M:
        return FockDiagonalPOVM(C[: M + 1])
    # extend by repeating the last Fock row: the detector response above the
    # given truncation is taken as saturated
    ext = np.vstack([C, np.repeat(C[-1:], M + 1 - C.shape[0], axis=0)])
    return FockDiagonalPOVM(ext)


def simulate(model: Union[str, FockDiagonalPOVM], sc: Scenario) -> SyntheticData:
    """Generate statistics for ``model`` (a zoo case name or a POVM).

    With ``sc.jitter > 0`` the data are generated at intensities multiplied
    by ``1 + N(0, jitter)`` while the returned response uses the nominal
    ones, i.e. the probe calibration is off by that much.
    """
    if sc.M_gen < sc.M:
        raise ValidationError("M_gen must be >= M")
    probes = sc.probes()
    response = build_response(probes, sc.M, sc.tail_tol)
    gen_probes = probes
    if sc.jitter > 0:
        rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 1]))
        x = probes.intensities * (1.0 + sc.jitter * rng.standard_normal(probes.D))
        order = np.argsort(x)
        gen_probes = ProbeEnsemble(np.abs(x[order]), probes.kind, probes.sigma_rel)
    gen = build_response(gen_probes, sc.M_gen, 1.0)
    P = predict_statistics(_truth_at(model, sc.M_gen), gen).P
    if sc.jitter > 0:
        P = P[np.argsort(order)]
    stats = StatisticsMatrix(P, probes=probes, meta={"M": sc.M, "kind": sc.kind,
                                                     "sigma_rel": sc.sigma_rel})
    if sc.shots:
        stats = sample_statistics(stats, sc.shots, sc.seed)
    return SyntheticData(_truth_at(model, sc.M), probes, response, stats)
