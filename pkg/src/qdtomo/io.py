"""CSV and JSON formats for every object that crosses a file boundary.

Numbers in CSV are written with 17 significant digits, enough to recover
every double exactly. JSON relies on the shortest round-trip ``repr`` that
the standard encoder already uses.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .analysis import SweepTable, WignerRadialProfile
from .entanglement import JointData, NegativityBound
from .errors import DimensionMismatch, ValidationError
from .fock import FockDiagonalPOVM, ProbeEnsemble, StatisticsMatrix
from .solver import ReconstructionReport, SolverConfig

CONFIG_KEYS = ("regularizer", "y", "damping_c", "weights", "eps_primal", "eps_dual", "max_iter",
               "noise_runs", "noise_sigma_rel", "seed", "norm", "init", "continuation_y",
               "alpha", "rho_rel", "adapt_iters", "tail_tol")


def fmt(v) -> str:
    return "%.17g" % float(v)


def _write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _read_rows(path, first, prefix=None):
    """Parse a numeric CSV whose header starts with ``first``.

    Returns (header, float array). Any unparsable or ragged line raises
    ValidationError naming its 1-based line number.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != first:
        raise ValidationError(f"{path}: header must start with {first!r}, got {header[:1]}")
    if prefix is not None:
        for i, h in enumerate(header[1:]):
            if h != f"{prefix}{i}":
                raise ValidationError(f"{path}: column {i + 2} should be {prefix}{i}, got {h!r}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise ValidationError(f"{path}: row {lineno} is not numeric: {','.join(row)}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"{path}: row {lineno} has a non-finite value")
        out.append(vals)
    if not out:
        raise ValidationError(f"{path}: no data rows")
    return header, np.array(out)


def _load_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _field(doc, key, path):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise ValidationError(f"{path}: missing field {key!r}") from None


# ---------------------------------------------------------------------------
# probes and statistics


def write_probes_csv(probes: ProbeEnsemble, path):
    _write_rows(path, ["x"], ([v] for v in probes.intensities))


def read_probes_csv(path, kind="pure", sigma_rel=0.02) -> ProbeEnsemble:
    _, a = _read_rows(path, "x")
    if a.shape[1] != 1:
        raise ValidationError(f"{path}: probe file must have a single x column")
    return ProbeEnsemble(a[:, 0], kind=kind, sigma_rel=sigma_rel)


def write_statistics_csv(stats: StatisticsMatrix, path):
    if stats.probes is None:
        raise ValidationError("statistics carry no probe intensities")
    header = ["x"] + [f"p{n}" for n in range(stats.N)]
    _write_rows(path, header, (np.concatenate([[x], p]) for x, p in zip(stats.probes.intensities, stats.P)))


def read_statistics_csv(path, kind="pure", sigma_rel=0.02) -> StatisticsMatrix:
    _, a = _read_rows(path, "x", prefix="p")
    if a.shape[1] < 2:
        raise ValidationError(f"{path}: no outcome columns")
    probes = ProbeEnsemble(a[:, 0], kind=kind, sigma_rel=sigma_rel)
    return StatisticsMatrix(a[:, 1:], probes=probes, meta={"N": a.shape[1] - 1, "kind": kind,
                                                           "sigma_rel": sigma_rel})


def statistics_to_dict(stats: StatisticsMatrix) -> dict:
    meta = {"M": None, "J": None, "seed": None, "kind": None, "sigma_rel": None}
    meta.update({k: v for k, v in stats.meta.items()})
    meta["N"] = stats.N
    if stats.probes is not None:
        meta["kind"] = stats.probes.kind
        meta["sigma_rel"] = float(stats.probes.sigma_rel)
    return {
        "x": None if stats.probes is None else stats.probes.intensities.tolist(),
        "P": stats.P.tolist(),
        "trials": None if stats.trials is None else stats.trials.tolist(),
        "meta": meta,
    }


def statistics_from_dict(doc, path="<statistics>") -> StatisticsMatrix:
    P = np.array(_field(doc, "P", path), dtype=float)
    meta = dict(_field(doc, "meta", path))
    x = doc.get("x")
    probes = None
    if x is not None:
        probes = ProbeEnsemble(np.array(x, dtype=float), kind=meta.get("kind") or "pure",
                               sigma_rel=meta.get("sigma_rel") if meta.get("sigma_rel") is not None else 0.02)
    if P.ndim != 2:
        raise ValidationError(f"{path}: P must be a matrix")
    if meta.get("N") not in (None, P.shape[1]):
        raise DimensionMismatch(f"{path}: meta N={meta['N']} but P has {P.shape[1]} columns")
    if probes is not None and probes.D != P.shape[0]:
        raise DimensionMismatch(f"{path}: {probes.D} intensities but {P.shape[0]} rows")
    return StatisticsMatrix(P, trials=doc.get("trials"), probes=probes, meta=meta)


def write_statistics_json(stats: StatisticsMatrix, path):
    _dump_json(statistics_to_dict(stats), path)


def read_statistics_json(path) -> StatisticsMatrix:
    return statistics_from_dict(_load_json(path), path)


def read_statistics(path, kind="pure", sigma_rel=0.02) -> StatisticsMatrix:
    """Dispatch on the file suffix; CSV files take the probe kind from the arguments."""
    if str(path).endswith(".json"):
        return read_statistics_json(path)
    return read_statistics_csv(path, kind, sigma_rel)


# ---------------------------------------------------------------------------
# POVMs


def write_povm_csv(povm: FockDiagonalPOVM, path):
    header = ["k"] + [f"theta{n}" for n in range(povm.N)]
    _write_rows(path, header, (np.concatenate([[k], row]) for k, row in enumerate(povm.coeffs)))


def read_povm_csv(path) -> FockDiagonalPOVM:
    _, a = _read_rows(path, "k", prefix="theta")
    if not np.array_equal(a[:, 0], np.arange(a.shape[0])):
        raise ValidationError(f"{path}: Fock index column must run 0, 1, 2, ...")
    return FockDiagonalPOVM(a[:, 1:])


def povm_to_dict(povm: FockDiagonalPOVM) -> dict:
    return {"M": povm.M, "N": povm.N, "coeffs": povm.coeffs.tolist()}


def povm_from_dict(doc, path="<povm>") -> FockDiagonalPOVM:
    C = np.array(_field(doc, "coeffs", path), dtype=float)
    if C.ndim != 2 or (doc.get("M") is not None and C.shape[0] != doc["M"] + 1):
        raise DimensionMismatch(f"{path}: coefficient shape {C.shape} does not match M")
    return FockDiagonalPOVM(C)


def read_povm(path) -> FockDiagonalPOVM:
    if str(path).endswith(".json"):
        doc = _load_json(path)
        return povm_from_dict(doc.get("povm", doc) if isinstance(doc, dict) else doc, path)
    return read_povm_csv(path)


# ---------------------------------------------------------------------------
# solver config and reports


def config_from_dict(doc, path="<config>") -> SolverConfig:
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {unknown}")
    try:
        return SolverConfig(**doc)
    except TypeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def read_config(path) -> SolverConfig:
    return config_from_dict(_load_json(path), path)


def write_config(cfg: SolverConfig, path):
    _dump_json(cfg.to_dict(), path)


def report_to_dict(rep: ReconstructionReport, cfg: SolverConfig) -> dict:
    return {
        "povm": povm_to_dict(rep.povm),
        "convergence": rep.summary(),
        "config": cfg.to_dict(),
        "feasibility": dict(zip(("negativity", "row_sum_deviation"), rep.povm.feasibility())),
    }


def write_report(rep: ReconstructionReport, cfg: SolverConfig, path):
    _dump_json(report_to_dict(rep, cfg), path)


# ---------------------------------------------------------------------------
# analysis outputs


def write_sweep_csv(table: SweepTable, path):
    _write_rows(path, ["axis", "repeat", "metric", "seed"],
                ([c.axis, str(c.repeat), c.metric, str(c.seed)] for c in table.cells))


def read_sweep_csv(path) -> np.ndarray:
    _, a = _read_rows(path, "axis")
    return a


def sweep_to_dict(table: SweepTable) -> dict:
    cells = []
    for c in table.cells:
        extra = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in c.extra.items()}
        cells.append({"axis": c.axis, "repeat": c.repeat, "metric": c.metric, "seed": c.seed,
                      "extra": extra})
    return {"kind": table.kind, "case": table.case, "axis_name": table.axis_name,
            "metric_name": table.metric_name, "config": table.config, "cells": cells}


def write_sweep_json(table: SweepTable, path):
    _dump_json(sweep_to_dict(table), path)


def write_wigner_csv(profile: WignerRadialProfile, path):
    _write_rows(path, ["r", "W"], zip(profile.r, profile.W))


# ---------------------------------------------------------------------------
# entanglement


def _mat_to_pairs(A):
    A = np.asarray(A, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in A]


def _pairs_to_mat(obj, where):
    a = np.array(obj, dtype=float)
    if a.ndim != 3 or a.shape[2] != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{where}: matrices must be square arrays of [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def joint_data_to_dict(data: JointData) -> dict:
    return {
        "dims": list(data.dims),
        "settings_A": [[_mat_to_pairs(e) for e in s] for s in data.settings_A],
        "settings_B": [[_mat_to_pairs(e) for e in s] for s in data.settings_B],
        "data": {f"{k},{l}": np.asarray(d).tolist() for (k, l), d in sorted(data.data.items())},
        "unbounded": bool(data.unbounded),
    }


def joint_data_from_dict(doc, path="<joint data>") -> JointData:
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    dims = _field(doc, "dims", path)
    if not (isinstance(dims, list) and len(dims) == 2):
        raise ValidationError(f"{path}: dims must be [dA, dB]")
    try:
        sA = [[_pairs_to_mat(e, f"{path}: settings_A") for e in s] for s in _field(doc, "settings_A", path)]
        sB = [[_pairs_to_mat(e, f"{path}: settings_B") for e in s] for s in _field(doc, "settings_B", path)]
        blocks = {}
        for key, val in _field(doc, "data", path).items():
            k, l = (int(t) for t in key.split(","))
            blocks[(k, l)] = np.array(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return JointData(tuple(dims), sA, sB, blocks, unbounded=bool(doc.get("unbounded", False)))


def read_joint_data(path) -> JointData:
    return joint_data_from_dict(_load_json(path), path)


def write_joint_data(data: JointData, path):
    _dump_json(joint_data_to_dict(data), path)


def bound_to_dict(b: NegativityBound) -> dict:
    return {
        "bound": b.bound,
        "beta": b.beta,
        "alpha": {",".join(str(i) for i in k): v for k, v in sorted(b.alpha.items())},
        "witness": _mat_to_pairs(b.witness),
        "eigenvalues": [float(v) for v in b.eigenvalues],
        "certified": b.certified,
        "trivial": b.trivial,
        "iterations": b.iterations,
        "converged": b.converged,
    }
