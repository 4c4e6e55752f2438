"""Timing comparison of the two Sinkhorn sweep backends.

Runs the raw log-domain sweep loop from both the compiled extension and
the pure NumPy twin on square kernels of growing size, then times one
end-to-end quadratic solve per backend in subprocesses (the backend is
chosen at import time, so each needs a fresh interpreter).

Usage: python benchmarks/bench_kernels.py [--sweeps N] [--sizes 64,160,512]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from permqp import _kernels_pure

try:
    from permqp import _kernels_cy
except ImportError:
    _kernels_cy = None


def time_loop(mod, n: int, sweeps: int, repeats: int = 3) -> float:
    """Best-of-repeats wall time of `sweeps` full sweeps on an n x n kernel."""
    rng = np.random.default_rng(0)
    log_k = 3.0 * rng.standard_normal((n, n))
    log_r = np.full(n, -np.log(n))
    log_m = np.full(n, -np.log(n))
    best = np.inf
    for _ in range(repeats):
        log_u = np.zeros(n)
        log_v = np.zeros(n)
        t0 = time.perf_counter()
        # tol=0 keeps the loop running for the full sweep budget
        mod.sinkhorn_loop(log_k, log_r, log_m, log_u, log_v, 0.0, sweeps, None)
        best = min(best, time.perf_counter() - t0)
    return best


_END_TO_END = """
import time
import numpy as np
from permqp import DenseQuadratic, MarginalSpec, SolverConfig, solve_quadratic
from permqp import kernels

rng = np.random.default_rng(7)
n = 12
d = n * n
G = rng.standard_normal((d, d))
H = G.T @ G / d
c = rng.standard_normal(d)
m = MarginalSpec.doubly_stochastic(n)
t0 = time.perf_counter()
coup, trace = solve_quadratic(DenseQuadratic(H), c, m, cfg=SolverConfig())
dt = time.perf_counter() - t0
print(f"{'compiled' if kernels.COMPILED else 'pure':9s} {dt:8.3f}s  "
      f"{trace.iterations} outer iterations")
"""


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--sizes", default="8,32,160,512")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if _kernels_cy is None:
        print("compiled extension not built; timing the pure backend only")
    print(f"{'size':>6s} {'pure ms/sweep':>14s} {'compiled ms/sweep':>18s} {'speedup':>8s}")
    for n in sizes:
        t_pure = time_loop(_kernels_pure, n, args.sweeps)
        row = f"{n:6d} {1e3 * t_pure / args.sweeps:14.3f}"
        if _kernels_cy is not None:
            t_cy = time_loop(_kernels_cy, n, args.sweeps)
            row += f" {1e3 * t_cy / args.sweeps:18.3f} {t_pure / t_cy:8.1f}x"
        print(row)

    print("\nend-to-end mirror-descent solve (n=12, dense convex instance):")
    for pure in (False, True):
        env = dict(os.environ)
        env.pop("PERMQP_PURE_KERNELS", None)
        if pure:
            env["PERMQP_PURE_KERNELS"] = "1"
        out = subprocess.run([sys.executable, "-c", _END_TO_END], env=env,
                             capture_output=True, text=True)
        print(out.stdout.strip() or out.stderr.strip())


if __name__ == "__main__":
    main()
