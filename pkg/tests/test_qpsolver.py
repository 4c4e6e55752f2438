import numpy as np
import pytest
from scipy.linalg import null_space

from permqp.core import (
    ConvergenceError,
    Coupling,
    DenseQuadratic,
    EnergySpec,
    MarginalSpec,
    OperatorQuadratic,
    marginal_error,
)
from permqp.oracle import dense_subspace_eigs, marginal_constraint_matrix
from permqp.qpsolver import SolverConfig, SolveTrace, solve_quadratic

cvxpy = pytest.importorskip("cvxpy")


def reduced_convex_min(H, c, marginals):
    """Global minimum of x'Hx + c'x over the coupling polytope for H PSD
    on the polytope's direction space, via the affine parameterization
    x = x0 + F z with F a nullspace basis of the marginal constraints."""
    nr, nc = marginals.shape
    A = marginal_constraint_matrix(nr, nc)
    F = null_space(A)
    x0 = Coupling.uniform(marginals).values.flatten(order="F")
    M = F.T @ H @ F
    M = 0.5 * (M + M.T)
    g = 2.0 * (H @ x0) @ F + c @ F
    const = float(x0 @ H @ x0 + c @ x0)
    z = cvxpy.Variable(F.shape[1])
    prob = cvxpy.Problem(
        cvxpy.Minimize(cvxpy.quad_form(z, cvxpy.psd_wrap(M)) + g @ z),
        [x0 + F @ z >= 0],
    )
    prob.solve(solver=cvxpy.CLARABEL)
    assert prob.status == "optimal"
    return const + float(prob.value)


def random_convex_operator(rng, dim):
    G = rng.standard_normal((dim, dim))
    return 0.5 * (G.T @ G) / dim + 0.1 * np.eye(dim)


def test_refined_solve_matches_convex_oracle():
    for seed, n in ((0, 3), (1, 3), (2, 4), (3, 5)):
        rng = np.random.default_rng(seed)
        dim = n * n
        H = random_convex_operator(rng, dim)
        c = rng.standard_normal(dim)
        ms = MarginalSpec.doubly_stochastic(n)
        coupling, trace = solve_quadratic(
            DenseQuadratic(H), c, ms, cfg=SolverConfig().refined()
        )
        got = trace.objectives[-1]
        ref = reduced_convex_min(H, c, ms)
        assert got >= ref - 1e-9 * max(1.0, abs(ref))  # never below the true min
        assert got == pytest.approx(ref, rel=1e-4, abs=1e-4)


def test_shifted_convex_stage_matches_oracle_at_flat_minimum():
    # H = W - a I with a the smallest restricted eigenvalue: convex but
    # degenerate along the polytope; values must still agree
    rng = np.random.default_rng(4)
    n = 3
    dim = n * n
    W = rng.standard_normal((dim, dim))
    W = 0.5 * (W + W.T)
    e = EnergySpec(n, n, DenseQuadratic(W))
    lo, _ = dense_subspace_eigs(e)
    H = W - lo * np.eye(dim)
    c = rng.standard_normal(dim)
    ms = MarginalSpec.doubly_stochastic(n)
    _, trace = solve_quadratic(DenseQuadratic(H), c, ms, cfg=SolverConfig().refined())
    ref = reduced_convex_min(H, c, ms)
    assert trace.objectives[-1] == pytest.approx(ref, rel=1e-4, abs=1e-4)


def test_first_step_size_normalization():
    rng = np.random.default_rng(5)
    n = 4
    dim = n * n
    H = random_convex_operator(rng, dim)
    c = rng.standard_normal(dim)
    ms = MarginalSpec.doubly_stochastic(n)
    cap = 70.0
    _, trace = solve_quadratic(
        DenseQuadratic(H), c, ms, cfg=SolverConfig(exponent_cap=cap)
    )
    x0 = Coupling.uniform(ms).values.flatten(order="F")
    d0 = H @ x0 + 0.5 * c
    assert trace.alphas[0] == pytest.approx(np.abs(d0).max() / cap, rel=1e-12)


def test_every_iterate_is_exactly_feasible():
    rng = np.random.default_rng(6)
    for n in (3, 5):
        dim = n * n
        W = rng.standard_normal((dim, dim))
        H = 0.5 * (W + W.T)
        c = rng.standard_normal(dim)
        ms = MarginalSpec.doubly_stochastic(n)
        coupling, trace = solve_quadratic(DenseQuadratic(H), c, ms)
        assert trace.marginal_errors.max() < 1e-12
        assert marginal_error(coupling.values, ms) < 1e-12


def test_final_stage_monotone_descent():
    rng = np.random.default_rng(7)
    n = 4
    dim = n * n
    H = random_convex_operator(rng, dim)
    c = rng.standard_normal(dim)
    ms = MarginalSpec.doubly_stochastic(n)
    _, trace = solve_quadratic(DenseQuadratic(H), c, ms, cfg=SolverConfig().refined())
    assert trace.stage_starts[0] == 0
    assert len(trace.stage_starts) >= 2  # main stage + refinement
    tail = trace.objectives[trace.stage_starts[-1] :]
    slack = 1e-9 * max(1.0, np.abs(tail).max())
    assert tail[-1] <= tail[0] + slack
    assert np.all(np.diff(tail) <= slack)


def test_zero_gradient_is_a_fixed_point():
    ms = MarginalSpec.doubly_stochastic(3)
    H = np.zeros((9, 9))
    coupling, trace = solve_quadratic(DenseQuadratic(H), np.zeros(9), ms)
    assert trace.iterations == 0
    assert trace.alphas.tolist() == [0.0]
    assert np.abs(coupling.values - 1.0 / 3.0).max() == 0.0


def test_pure_linear_objective_reaches_assignment_vertex():
    # H = 0 reduces mirror descent to an entropic linear-program solver
    c = np.array([[0.0, 5.0, 5.0], [5.0, 0.0, 5.0], [5.0, 5.0, 0.0]])
    ms = MarginalSpec.doubly_stochastic(3)
    coupling, trace = solve_quadratic(
        DenseQuadratic(np.zeros((9, 9))),
        c.flatten(order="F"),
        ms,
        cfg=SolverConfig(eta=0.05),
    )
    assert np.abs(coupling.values - np.eye(3)).max() < 1e-3
    assert trace.objectives[-1] == pytest.approx(0.0, abs=1e-2)


def test_budget_exhaustion_raises():
    rng = np.random.default_rng(8)
    dim = 9
    H = random_convex_operator(rng, dim)
    c = rng.standard_normal(dim)
    ms = MarginalSpec.doubly_stochastic(3)
    with pytest.raises(ConvergenceError):
        solve_quadratic(DenseQuadratic(H), c, ms, cfg=SolverConfig(max_outer_iters=1))


def test_warm_start_from_solution_converges_immediately():
    rng = np.random.default_rng(9)
    dim = 16
    H = random_convex_operator(rng, dim)
    c = rng.standard_normal(dim)
    ms = MarginalSpec.doubly_stochastic(4)
    coupling, trace = solve_quadratic(DenseQuadratic(H), c, ms)
    _, trace2 = solve_quadratic(DenseQuadratic(H), c, ms, x_init=coupling)
    assert trace2.iterations <= max(5, trace.iterations // 10)
    assert trace2.objectives[-1] == pytest.approx(trace.objectives[-1], rel=1e-6)


def test_operator_and_dense_agree():
    rng = np.random.default_rng(10)
    dim = 9
    H = random_convex_operator(rng, dim)
    c = rng.standard_normal(dim)
    ms = MarginalSpec.doubly_stochastic(3)
    _, ta = solve_quadratic(DenseQuadratic(H), c, ms)
    _, tb = solve_quadratic(OperatorQuadratic(lambda v: H @ v, dim), c, ms)
    assert ta.objectives[-1] == pytest.approx(tb.objectives[-1], rel=1e-12)
    assert ta.iterations == tb.iterations


def test_nonconvex_stage_descends_from_warm_start():
    # concave-leaning shifted stage started from a prior stage's coupling
    rng = np.random.default_rng(11)
    n = 4
    dim = n * n
    W = rng.standard_normal((dim, dim))
    W = 0.5 * (W + W.T)
    ms = MarginalSpec.doubly_stochastic(n)
    e = EnergySpec(n, n, DenseQuadratic(W))
    lo, hi = dense_subspace_eigs(e)
    Hlo = W - lo * np.eye(dim)
    c = np.zeros(dim)
    x_convex, _ = solve_quadratic(DenseQuadratic(Hlo), c, ms)
    Hhi = W - hi * np.eye(dim)
    coupling, trace = solve_quadratic(DenseQuadratic(Hhi), c, ms, x_init=x_convex)
    start = float(
        x_convex.stacked @ (Hhi @ x_convex.stacked) + c @ x_convex.stacked
    )
    assert trace.objectives[-1] <= start + 1e-9 * max(1.0, abs(start))
    assert trace.marginal_errors.max() < 1e-12


def test_input_validation():
    ms = MarginalSpec.doubly_stochastic(3)
    H = np.zeros((9, 9))
    with pytest.raises(ValueError):
        solve_quadratic(DenseQuadratic(np.zeros((4, 4))), np.zeros(4), ms)
    with pytest.raises(ValueError):
        solve_quadratic(DenseQuadratic(H), np.zeros(8), ms)
    with pytest.raises(ValueError):
        solve_quadratic(DenseQuadratic(H), np.zeros(9), ms, x_init=np.ones((2, 2)))


def test_solver_config_validation_and_refinement():
    with pytest.raises(ValueError):
        SolverConfig(eta=0.0)
    with pytest.raises(ValueError):
        SolverConfig(eta=1.5)
    with pytest.raises(ValueError):
        SolverConfig(exponent_cap=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(stall_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(refine=((0.0, 10.0),))
    cfg = SolverConfig(sinkhorn_max_iters=80000, stall_tol=1e-8)
    r = cfg.refined()
    assert r.refine == ((1e-3, 1e3),)
    assert r.sinkhorn_max_iters == 80000  # never shrinks an explicit budget
    assert r.stall_tol == 1e-8  # never loosens an explicit tolerance
    r2 = SolverConfig().refined()
    assert r2.sinkhorn_max_iters == 50000
    assert r2.stall_tol == 1e-6


def test_trace_defaults():
    t = SolveTrace()
    assert t.iterations == 0
    assert t.final_step_delta == np.inf
    assert t.objectives.size == 0
