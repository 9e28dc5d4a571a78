"""Command-line front end.

Every command writes its outputs into one directory together with a
``manifest.json`` recording the resolved arguments, input and output
digests, seed, version and wall-clock time. Payload files never contain
timestamps, so identical arguments give byte-identical payloads.

Exit codes: 0 success, 2 invalid input, 3 solver did not converge.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io
from ._accel import backend
from .analysis import (element_fidelities, noise_resilience_sweep, relative_error,
                       smoothing_sweep, wigner_radial)
from .detectors import (LOSSY_TMD_EFFICIENCY, MEASURED_REFLECTIVITIES, ZOO_CASES, SplitterTree,
                        apd_povm, lossy_tmd_povm, povm_zoo)
from .entanglement import (bell_state, joint_data_from_state, negativity_lower_bound,
                           pauli_settings, werner_state)
from .errors import NotConverged, QDTomoError
from .fock import build_response
from .simulation import Scenario, simulate
from .solver import SolverConfig, noise_average_reconstruct, reconstruct

log = logging.getLogger("qdtomo")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3
OUTPUT_ENV = "QDTOMO_OUTPUT_DIR"
MODELS = ZOO_CASES + ("apd", "tmd")


class UsageError(QDTomoError):
    """Bad combination of command-line flags."""


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects inputs and outputs of one command and writes the manifest."""

    def __init__(self, command, args):
        self.command = command
        self.args = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
        self.out = Path(args.out or os.environ.get(OUTPUT_ENV) or "qdtomo-out")
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs = {}
        self.outputs = {}
        self.extra = {}
        self.t0 = time.perf_counter()

    def input(self, path):
        if path is not None:
            if not Path(path).is_file():
                raise UsageError(f"input file not found: {path}")
            self.inputs[str(path)] = sha256(path)
        return path

    def path(self, name):
        p = self.out / name
        self.outputs[name] = p
        return p

    def finish(self, status="ok"):
        manifest = {
            "command": self.command,
            "arguments": self.args,
            "seed": self.args.get("seed"),
            "version": __version__,
            "backend": backend(),
            "inputs": self.inputs,
            "outputs": {k: sha256(p) for k, p in sorted(self.outputs.items()) if p.exists()},
            "status": status,
            "duration_s": round(time.perf_counter() - self.t0, 3),
            "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        manifest.update(self.extra)
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")


def _floats(text, flag):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"{flag}: empty grid")
    return vals


def _check_probe_flags(args):
    checks = [
        ("--xmax", args.xmax > 0),
        ("--count", args.count >= 1),
        ("--sigma-rel", args.sigma_rel >= 0),
        ("--M", args.M >= 1),
        ("--M-gen", args.M_gen >= args.M),
        ("--shots", args.shots >= 0),
        ("--jitter", args.jitter >= 0),
        ("--tail-tol", args.tail_tol > 0),
    ]
    if args.xmin is not None:
        checks.append(("--xmin", 0 <= args.xmin < args.xmax))
    if getattr(args, "eta", None) is not None:
        checks.append(("--eta", 0 <= args.eta <= 1))
    for flag, ok in checks:
        if not ok:
            raise UsageError(f"invalid value for {flag}")


def _scenario(args) -> Scenario:
    _check_probe_flags(args)
    return Scenario(xmax=args.xmax, count=args.count, spacing=args.spacing, xmin=args.xmin,
                    kind=args.kind, sigma_rel=args.sigma_rel, M=args.M, M_gen=args.M_gen,
                    shots=args.shots, seed=args.seed, tail_tol=args.tail_tol, jitter=args.jitter)


def _model(args):
    if args.model == "apd":
        if args.eta is None:
            raise UsageError("--eta is required for --model apd")
        return apd_povm(args.eta, args.M_gen)
    if args.bins < 2 or args.bins & (args.bins - 1):
        raise UsageError("invalid value for --bins: need a power of two >= 2")
    if args.model == "tmd":
        tree = SplitterTree.balanced(args.bins)
        return lossy_tmd_povm(tree, 1.0 if args.eta is None else args.eta, args.M_gen)
    if args.model in ("lossy_tmd_52", "lossless_tmd") and args.bins != 2 ** len(MEASURED_REFLECTIVITIES):
        eta = LOSSY_TMD_EFFICIENCY if args.model == "lossy_tmd_52" else 1.0
        return lossy_tmd_povm(SplitterTree.balanced(args.bins), eta, args.M_gen)
    if args.eta is not None:
        raise UsageError(f"--eta does not apply to --model {args.model}")
    return povm_zoo(args.model, args.M_gen)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    run = Run("simulate", args)
    sc = _scenario(args)
    data = simulate(_model(args), sc)
    io.write_probes_csv(data.probes, run.path("probes.csv"))
    io.write_statistics_csv(data.stats, run.path("statistics.csv"))
    meta = dict(data.stats.meta)
    meta.setdefault("J", None)
    meta.setdefault("seed", args.seed)
    stats = replace(data.stats, meta=meta)
    io.write_statistics_json(stats, run.path("statistics.json"))
    io.write_povm_csv(data.truth, run.path("povm_true.csv"))
    run.extra["scenario"] = sc.to_dict()
    run.finish()
    print(f"wrote {data.stats.D} x {data.stats.N} statistics to {run.out}")
    return EXIT_OK


def _config(args) -> SolverConfig:
    cfg = io.read_config(args.config) if args.config else SolverConfig()
    over = {}
    for key in ("regularizer", "y", "damping_c", "max_iter", "eps_primal", "eps_dual", "norm",
                "init", "noise_runs", "noise_sigma_rel", "seed", "tail_tol"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    return cfg.replace(**over) if over else cfg


def cmd_reconstruct(args):
    run = Run("reconstruct", args)
    kind = args.kind or "pure"
    sigma_rel = 0.02 if args.sigma_rel is None else args.sigma_rel
    stats = io.read_statistics(run.input(args.stats), kind, sigma_rel)
    probes = stats.probes
    if args.probes:
        probes = io.read_probes_csv(run.input(args.probes), kind, sigma_rel)
        if probes.D != stats.D:
            raise UsageError(f"--probes has {probes.D} intensities, statistics have {stats.D} rows")
    elif args.kind is not None and probes is not None:
        probes = replace(probes, kind=kind,
                         sigma_rel=probes.sigma_rel if args.sigma_rel is None else sigma_rel)
    if probes is None:
        raise UsageError("statistics file has no intensities; pass --probes")
    run.input(args.config)
    cfg = _config(args)
    run.extra["config"] = cfg.to_dict()
    if cfg.noise_runs:
        rep = noise_average_reconstruct(stats, probes, cfg, M=args.M, jobs=args.jobs)
    else:
        F = build_response(probes, args.M, cfg.tail_tol)
        rep = reconstruct(stats, F, cfg)
    io.write_report(rep, cfg, run.path("report.json"))
    io.write_povm_csv(rep.povm, run.path("povm.csv"))
    status = "ok" if rep.converged else "not_converged"
    run.finish(status)
    print(f"residual {rep.residual:.6g}  penalty {rep.penalty:.6g}  iterations {rep.iterations}  "
          f"converged {rep.converged}")
    if not rep.converged and not args.allow_nonconverged:
        raise NotConverged(f"solver stopped after {rep.iterations} iterations "
                           f"(primal {rep.primal_residual:.3g}, kkt {rep.kkt_residual:.3g}); "
                           "outputs were written, rerun with --allow-nonconverged to accept them")
    return EXIT_OK


def cmd_sweep(args):
    run = Run(f"sweep-{args.kind_of_sweep}", args)
    sc = _scenario(args)
    cfg = _config(args)
    ys = _floats(args.ys, "--ys")
    if args.kind_of_sweep == "smoothing":
        table = smoothing_sweep(args.case, ys, cfg, sc, jobs=args.jobs)
        io.write_sweep_csv(table, run.path("sweep.csv"))
        io.write_sweep_json(table, run.path("sweep.json"))
    else:
        deltas = _floats(args.deltas, "--deltas")
        tables = noise_resilience_sweep(args.case, deltas, ys, args.repeats, cfg, sc, jobs=args.jobs)
        for y, table in tables.items():
            io.write_sweep_csv(table, run.path(f"sweep_y{y:g}.csv"))
            io.write_sweep_json(table, run.path(f"sweep_y{y:g}.json"))
    run.finish()
    print(f"wrote sweep tables to {run.out}")
    return EXIT_OK


def cmd_analyze(args):
    run = Run(f"analyze-{args.what}", args)
    povm = io.read_povm(run.input(args.povm))
    ref = io.read_povm(run.input(args.ref)) if args.ref else None
    if args.what == "wigner":
        radii = np.linspace(0.0, args.rmax, args.points)
        outcomes = range(povm.N) if args.outcome is None else [args.outcome]
        for n in outcomes:
            io.write_wigner_csv(wigner_radial(povm, n, radii), run.path(f"wigner_{n}.csv"))
            if ref is not None:
                io.write_wigner_csv(wigner_radial(ref, n, radii), run.path(f"wigner_ref_{n}.csv"))
    else:
        if ref is None:
            raise UsageError(f"analyze {args.what} needs --ref")
        path = run.path(f"{args.what}.json")
        if args.what == "fidelity":
            f = element_fidelities(povm, ref)
            doc = {"fidelities": f.tolist(), "minimum": float(f.min())}
            print("minimum fidelity", io.fmt(f.min()))
        else:
            doc = {"relative_error_percent": relative_error(povm, ref)}
            print("relative error %", io.fmt(doc["relative_error_percent"]))
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    run.finish()
    return EXIT_OK


def cmd_verify_entanglement(args):
    run = Run("verify-entanglement", args)
    data = io.read_joint_data(run.input(args.data))
    b = negativity_lower_bound(data, tol=args.tol, max_iter=args.max_iter)
    run.path("bound.json").write_text(json.dumps(io.bound_to_dict(b), indent=1, sort_keys=True) + "\n")
    run.finish()
    print("negativity lower bound", io.fmt(b.bound))
    return EXIT_OK


def cmd_fixture(args):
    run = Run("make-fixture", args)
    d = pauli_settings()
    if args.state == "bell":
        rho = bell_state()
    elif args.state == "product":
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 0] = 1.0
    else:
        rho = werner_state(args.visibility)
    io.write_joint_data(joint_data_from_state(d, d, rho), run.path("joint.json"))
    run.finish()
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _probe_flags(p):
    p.add_argument("--xmin", type=float, default=None)
    p.add_argument("--xmax", type=float, default=30.0, help="largest probe intensity |alpha|^2")
    p.add_argument("--count", type=int, default=100, help="number of probes")
    p.add_argument("--spacing", choices=("linear", "amplitude", "log"), default="amplitude")
    p.add_argument("--kind", choices=("pure", "mixed"), default="pure")
    p.add_argument("--sigma-rel", dest="sigma_rel", type=float, default=0.02)
    p.add_argument("--M", type=int, default=60, help="Fock truncation for reconstruction")
    p.add_argument("--M-gen", dest="M_gen", type=int, default=150,
                   help="Fock truncation used to generate data")
    p.add_argument("--shots", type=int, default=0, help="trials per probe, 0 for exact probabilities")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.0,
                   help="relative intensity miscalibration of the generated data")
    p.add_argument("--tail-tol", dest="tail_tol", type=float, default=1e-6)


def _solver_flags(p):
    p.add_argument("--config", help="solver config JSON")
    p.add_argument("--regularizer", choices=("none", "smoothing", "damping"))
    p.add_argument("--y", type=float)
    p.add_argument("--damping-c", dest="damping_c", type=float)
    p.add_argument("--norm", choices=("unsquared", "squared"))
    p.add_argument("--init", choices=("uniform", "continuation"))
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--eps-primal", dest="eps_primal", type=float)
    p.add_argument("--eps-dual", dest="eps_dual", type=float)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qdtomo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./qdtomo-out)")
        p.add_argument("-v", "--verbose", action="store_true")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "generate synthetic statistics")
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--eta", type=float, help="efficiency for apd and tmd models")
    p.add_argument("--bins", type=int, default=8)
    _probe_flags(p)

    p = add("reconstruct", cmd_reconstruct, "reconstruct a POVM from statistics")
    p.add_argument("--stats", required=True, help="statistics CSV or JSON")
    p.add_argument("--probes", help="probe intensities CSV (overrides the x column)")
    p.add_argument("--kind", choices=("pure", "mixed"), default=None)
    p.add_argument("--sigma-rel", dest="sigma_rel", type=float, default=None)
    p.add_argument("--M", type=int, default=60)
    p.add_argument("--tail-tol", dest="tail_tol", type=float)
    p.add_argument("--noise-runs", dest="noise_runs", type=int)
    p.add_argument("--noise-sigma-rel", dest="noise_sigma_rel", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--allow-nonconverged", action="store_true")
    _solver_flags(p)

    p = add("sweep", cmd_sweep, "smoothing or probe-noise sweeps over a zoo case")
    p.add_argument("kind_of_sweep", choices=("smoothing", "noise"))
    p.add_argument("--case", choices=ZOO_CASES, default="lossy_tmd_52")
    p.add_argument("--ys", default="0.0001,0.001,0.01,0.05,0.1,0.2,0.5,1")
    p.add_argument("--deltas", default="0,0.01,0.02")
    p.add_argument("--repeats", type=int, default=4)
    _probe_flags(p)
    _solver_flags(p)

    p = add("analyze", cmd_analyze, "Wigner profiles, fidelities, relative errors")
    p.add_argument("what", choices=("wigner", "fidelity", "relerr"))
    p.add_argument("--povm", required=True)
    p.add_argument("--ref", help="reference POVM")
    p.add_argument("--outcome", type=int)
    p.add_argument("--rmax", type=float, default=6.0)
    p.add_argument("--points", type=int, default=400)

    p = add("verify-entanglement", cmd_verify_entanglement, "certified negativity lower bound")
    p.add_argument("--data", required=True, help="joint data JSON")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=20_000)

    p = add("make-fixture", cmd_fixture, "two-qubit joint data for testing")
    p.add_argument("state", choices=("bell", "product", "werner"))
    p.add_argument("--visibility", type=float, default=1.0)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except QDTomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
