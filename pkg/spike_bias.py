"""Bias vs exponent_cap, stability of eta*cap products, iteration cost."""
import time

import numpy as np
import cvxpy as cp

from permqp import MarginalSpec, DenseQuadratic, SolverConfig, solve_quadratic
from permqp.core import ConvergenceError


def oracle_min(H, c, n):
    X = cp.Variable((n, n), nonneg=True)
    x = cp.vec(X, order="F")
    cons = [cp.sum(X, axis=1) == 1, cp.sum(X, axis=0) == 1]
    prob = cp.Problem(cp.Minimize(cp.quad_form(x, cp.psd_wrap(H)) + c @ x), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def trial_set(n=3, n_trials=8, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_trials):
        d = n * n
        G = rng.standard_normal((d, d))
        H = G.T @ G / d
        c = rng.standard_normal(d)
        out.append((H, c, oracle_min(H, c, n)))
    return out


trials = trial_set()

for refine in [
    (),
    ((1e-2, 3e2),),
    ((1e-2, 1e3),),
    ((3e-3, 1e3),),
    ((1e-3, 1e3),),
    ((1e-3, 1e3), (1e-3, 1e4)),
    ((1e-3, 1e3), (1e-4, 1e4)),
    ((1e-3, 1e3), (1e-3, 3e3)),
]:
    cfg = SolverConfig(refine=refine)
    errs, its, tms, fails = [], [], [], 0
    for H, c, f_star in trials:
        t0 = time.time()
        try:
            coup, trace = solve_quadratic(DenseQuadratic(H), c, MarginalSpec.doubly_stochastic(3), cfg=cfg)
            errs.append(abs(trace.objectives[-1] - f_star) / max(1.0, abs(f_star)))
            its.append(trace.iterations)
        except ConvergenceError:
            fails += 1
        tms.append(time.time() - t0)
    tag = " ".join(f"({e:g},{c:g})" for e, c in refine) or "none"
    if errs:
        print(f"refine [{tag:36s}] max_rel={max(errs):.2e} iters={np.mean(its):6.0f} t={np.mean(tms)*1e3:6.0f}ms fails={fails}")
    else:
        print(f"refine [{tag:36s}] ALL FAILED")
