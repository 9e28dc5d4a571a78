"""Time the compiled and the pure-numpy kernels on a lossy-TMD sized problem.

    python benchmarks/bench_kernels.py            # both backends, side by side
    python benchmarks/bench_kernels.py --single   # current backend only, JSON out

The backend is chosen at import time, so the numpy run happens in a child
process with QDTOMO_DISABLE_NUMBA=1.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeat):
    fn()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def run_single(repeat):
    from qdtomo import backend, kernels
    from qdtomo.detectors import MEASURED_REFLECTIVITIES
    from qdtomo.fock import ProbeEnsemble, build_response

    rng = np.random.default_rng(0)
    K, N, D = 61, 9, 200
    A = rng.normal(size=(K, N))
    F = build_response(ProbeEnsemble.grid(40.0, D, "amplitude"), K - 1, 5e-3).F
    P = F @ kernels.project_rows(rng.random((K, N)))
    H = 2 * F.T @ F
    lam, V = np.linalg.eigh(H)
    Vs = np.repeat(V[None], N, axis=0)
    lams = np.repeat(lam[None], N, axis=0)
    q = 2 * F.T @ P
    Z0 = np.full((K, N), 1.0 / N)
    iters = 2000

    def admm():
        kernels.admm(Vs, lams, q, Z0, np.zeros_like(Z0), 1e-3 * lam.max(), max_iter=iters,
                     eps_p=1e-300, eps_d=1e-300)

    B = np.zeros((K, 2))
    B[0, 0] = 1.0
    B[1:, 1] = 1.0
    out = {
        "backend": backend(),
        "project_rows_us": 1e6 * best_of(lambda: kernels.project_rows(A), repeat),
        "admm_us_per_iter": 1e6 * best_of(admm, max(1, repeat // 10)) / iters,
        "double_bins_ms": 1e3 * best_of(lambda: kernels.double_bins(B, MEASURED_REFLECTIVITIES[0]), repeat),
    }
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--single", action="store_true")
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    if args.single:
        print(json.dumps(run_single(args.repeat)))
        return
    rows = []
    for disable in ("0", "1"):
        env = dict(os.environ, QDTOMO_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, __file__, "--single", "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        rows.append(json.loads(res.stdout.strip().splitlines()[-1]))
    keys = [k for k in rows[0] if k != "backend"]
    print(f"{'kernel':<20}" + "".join(f"{r['backend']:>12}" for r in rows) + f"{'speedup':>10}")
    for k in keys:
        a, b = rows[0][k], rows[1][k]
        print(f"{k:<20}{a:>12.3f}{b:>12.3f}{b / a:>10.1f}")


if __name__ == "__main__":
    main()
