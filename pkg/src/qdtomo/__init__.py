"""Quantum detector tomography in the Fock-diagonal sector."""

from ._accel import HAVE_NUMBA, backend
from .detectors import (SplitterTree, apd_povm, binning_recursion, loss_matrix, lossy_tmd_povm,
                        povm_zoo)
from .errors import (DimensionCap, DimensionMismatch, InconsistentData, InfeasibleInput,
                     NotConverged, QDTomoError, QuadratureFailure, TruncationInsufficient,
                     ValidationError, ZeroElement)
from .fock import (FockDiagonalPOVM, ProbeEnsemble, ResponseMatrix, StatisticsMatrix,
                   build_mixed_response, build_pure_response, predict_statistics,
                   sample_statistics)
from .solver import (ReconstructionReport, SolverConfig, damping_penalty,
                     noise_average_reconstruct, reconstruct, smoothing_penalty,
                     weighted_reconstruct)

__version__ = "0.1.0"

__all__ = [
    "HAVE_NUMBA", "backend",
    "SplitterTree", "apd_povm", "binning_recursion", "loss_matrix", "lossy_tmd_povm", "povm_zoo",
    "DimensionCap", "DimensionMismatch", "InconsistentData", "InfeasibleInput", "NotConverged",
    "QDTomoError", "QuadratureFailure", "TruncationInsufficient", "ValidationError", "ZeroElement",
    "FockDiagonalPOVM", "ProbeEnsemble", "ResponseMatrix", "StatisticsMatrix",
    "build_mixed_response", "build_pure_response", "predict_statistics", "sample_statistics",
    "ReconstructionReport", "SolverConfig", "damping_penalty", "noise_average_reconstruct",
    "reconstruct", "smoothing_penalty", "weighted_reconstruct",
]
