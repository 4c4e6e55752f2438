"""Throwaway spike: fixed-point semantics + entropic bias of the solver."""
import time

import numpy as np
import cvxpy as cp

from permqp import MarginalSpec, DenseQuadratic, SolverConfig, solve_quadratic


def oracle_min(H, c, n):
    X = cp.Variable((n, n), nonneg=True)
    x = cp.vec(X, order="F")
    cons = [cp.sum(X, axis=1) == 1, cp.sum(X, axis=0) == 1]
    prob = cp.Problem(cp.Minimize(cp.quad_form(x, cp.psd_wrap(H)) + c @ x), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value, X.value


def run(n_trials=10, n=3, cfg=SolverConfig(), seed=0, scale_c=1.0):
    rng = np.random.default_rng(seed)
    rel_errs = []
    iters = []
    for t in range(n_trials):
        d = n * n
        G = rng.standard_normal((d, d))
        H = G.T @ G / d
        c = rng.standard_normal(d) * scale_c
        m = MarginalSpec.doubly_stochastic(n)
        t0 = time.time()
        coup, trace = solve_quadratic(DenseQuadratic(H), c, m, cfg=cfg)
        dt = time.time() - t0
        f_hat = trace.objectives[-1]
        f_star, _ = oracle_min(H, c, n)
        rel = abs(f_hat - f_star) / max(1.0, abs(f_star))
        rel_errs.append(rel)
        iters.append(trace.iterations)
        if t < 3:
            print(f"  trial {t}: f_hat={f_hat:.8f} f_star={f_star:.8f} rel={rel:.2e} iters={trace.iterations} time={dt*1e3:.0f}ms")
    print(f"  max rel err: {max(rel_errs):.3e}  mean iters: {np.mean(iters):.0f}")
    return max(rel_errs)


print("== paper defaults (eta=.01, cap=100) ==")
run(cfg=SolverConfig())
print("== refined ladder (1e-3,1e4),(1e-4,1e6) ==")
run(cfg=SolverConfig().refined())
print("== refined, n=5 ==")
run(n=5, cfg=SolverConfig().refined())
print("== refined, larger c ==")
run(cfg=SolverConfig().refined(), scale_c=3.0)
