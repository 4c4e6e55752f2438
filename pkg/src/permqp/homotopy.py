"""Convex-to-concave continuation over the shifted energy family.

The shifted energies E(X, a) = E(X) - a ||X||_F^2 + a n all agree on
matching matrices.  At a equal to the smallest restricted eigenvalue the
problem is convex on the coupling polytope and its minimum is a lower
bound for the matching problem; at the largest restricted eigenvalue it
is concave, so minimizers sit at vertices (matchings).  The continuation
solves a uniform ladder of shifts, warm-starting each from the last, and
rounds the final near-vertex coupling with an exact L2 projection.

Lower-bound values are reported from solver runs with the accuracy
refinement enabled, since their entropic bias (which can only raise a
reported minimum) must stay below the bound-comparison tolerances; the
continuation stages themselves run with the plain solver configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    Coupling,
    EnergySpec,
    MarginalSpec,
    OperatorQuadratic,
    Permutation,
    eval_energy,
    eval_shifted,
)
from .projection import l2_project
from .qpsolver import SolverConfig, solve_quadratic
from .spectral import COARSE_TOL, lambda_bar_range, lambda_min_full

__all__ = [
    "HomotopyConfig",
    "HomotopyTrace",
    "BoundReport",
    "relax_convex",
    "homotopy_solve",
    "fuzzy_solve",
    "bound_hierarchy",
]


@dataclass(frozen=True)
class HomotopyConfig:
    """Continuation knobs.

    num_samples       number of shift samples including both endpoints
    a_lo, a_hi        shift range; default to the restricted-spectrum
                      extremes of the energy
    final_l2_projection  round the last coupling to a matching (leave off
                      for slack-augmented problems, which are projected
                      after dropping the slack row)
    solver            per-stage solver configuration
    seed              RNG seed for eigensolver starts (determinism)
    """

    num_samples: int = 10
    a_lo: float | None = None
    a_hi: float | None = None
    final_l2_projection: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be at least 1")


@dataclass
class HomotopyTrace:
    """Per-stage record: shift values, objective of each stage's starting
    point under its own shift (warm-start bookkeeping), final objectives,
    the convex-stage coupling, the final coupling, and solver iteration
    counts."""

    a_values: np.ndarray
    init_objectives: np.ndarray
    final_objectives: np.ndarray
    convex_coupling: Coupling
    final_coupling: Coupling
    solver_iterations: np.ndarray


@dataclass(frozen=True)
class BoundReport:
    """Lower bounds of increasing tightness plus the rounded upper bound.

    spectral  n * (smallest full-space eigenvalue) + d; only when c = 0
    ds        polytope minimum of the unshifted energy; only when convex
    ds_plus   polytope minimum shifted by the full-space smallest eigenvalue
    ds_pp     polytope minimum shifted by the restricted smallest eigenvalue
    upper     exact energy of the continuation's rounded matching
    """

    ds_plus: float
    ds_pp: float
    upper: float
    permutation: Permutation
    spectral: float | None = None
    ds: float | None = None


def _shifted_quadratic(e: EnergySpec, a: float) -> OperatorQuadratic:
    base = e.quadratic
    return OperatorQuadratic(lambda x: base.matvec(x) - a * x, e.dim)


def _default_marginals(e: EnergySpec, marginals: MarginalSpec | None) -> MarginalSpec:
    if marginals is not None:
        if marginals.shape != (e.k, e.n):
            raise ValueError(
                f"marginal shape {marginals.shape} != energy shape {(e.k, e.n)}"
            )
        return marginals
    if e.k != e.n:
        raise ValueError("rectangular energies need explicit marginals")
    return MarginalSpec.doubly_stochastic(e.n)


def _solve_shift(
    e: EnergySpec,
    a: float,
    marginals: MarginalSpec,
    x_init: Coupling | None,
    cfg: SolverConfig,
) -> tuple[Coupling, float, int]:
    """Minimize the shifted energy at shift a; returns (coupling,
    shifted objective value, solver iterations)."""
    coupling, trace = solve_quadratic(
        _shifted_quadratic(e, a), e.c, marginals, x_init=x_init, cfg=cfg
    )
    return coupling, float(trace.objectives[-1] + e.d + a * e.n), trace.iterations


def relax_convex(
    e: EnergySpec,
    marginals: MarginalSpec | None = None,
    cfg: SolverConfig | None = None,
    rng: np.random.Generator | int | None = None,
) -> tuple[Coupling, float]:
    """Solve the convex member of the shifted family (shift = smallest
    restricted eigenvalue) and return its coupling and the lower bound it
    certifies for the matching problem."""
    marginals = _default_marginals(e, marginals)
    cfg = SolverConfig().refined() if cfg is None else cfg
    a_lo, _ = lambda_bar_range(e, rng=rng)
    coupling, bound, _ = _solve_shift(e, a_lo, marginals, None, cfg)
    return coupling, bound


def _run_ladder(
    e: EnergySpec,
    a_values: np.ndarray,
    marginals: MarginalSpec,
    cfg: SolverConfig,
) -> HomotopyTrace:
    init_objs, final_objs, iters = [], [], []
    x = Coupling.uniform(marginals)
    convex_coupling = None
    for a in a_values:
        init_objs.append(eval_shifted(e, x, a))
        x, _, it = _solve_shift(e, float(a), marginals, x, cfg)
        final_objs.append(eval_shifted(e, x, a))
        iters.append(it)
        if convex_coupling is None:
            convex_coupling = x
    return HomotopyTrace(
        a_values=np.asarray(a_values, dtype=float),
        init_objectives=np.array(init_objs),
        final_objectives=np.array(final_objs),
        convex_coupling=convex_coupling,
        final_coupling=x,
        solver_iterations=np.array(iters, dtype=int),
    )


def homotopy_solve(
    e: EnergySpec,
    cfg: HomotopyConfig = HomotopyConfig(),
    marginals: MarginalSpec | None = None,
) -> tuple[Permutation | None, HomotopyTrace]:
    """Run the continuation from the convex to the concave end of the
    shifted family and round the result to a matching.

    Returns (permutation, trace); the permutation is None when
    final_l2_projection is off (the caller rounds, e.g. after dropping a
    slack row).
    """
    marginals = _default_marginals(e, marginals)
    a_lo, a_hi = cfg.a_lo, cfg.a_hi
    if a_lo is None or a_hi is None:
        # endpoints only place the ladder; coarse placement is plenty
        lo, hi = lambda_bar_range(e, tol=COARSE_TOL, rng=np.random.default_rng(cfg.seed))
        a_lo = lo if a_lo is None else a_lo
        a_hi = hi if a_hi is None else a_hi
    if a_lo > a_hi:
        raise ValueError(f"empty shift range [{a_lo}, {a_hi}]")
    if a_lo == a_hi:
        a_values = np.array([a_lo])
    else:
        if cfg.num_samples < 2:
            raise ValueError("num_samples must be >= 2 for a nontrivial range")
        a_values = np.linspace(a_lo, a_hi, cfg.num_samples)
    trace = _run_ladder(e, a_values, marginals, cfg.solver)
    if not cfg.final_l2_projection:
        return None, trace
    return l2_project(trace.final_coupling), trace


def fuzzy_solve(
    e: EnergySpec,
    cfg: HomotopyConfig = HomotopyConfig(),
    marginals: MarginalSpec | None = None,
) -> tuple[Coupling, HomotopyTrace]:
    """Continuation over the convex-to-unshifted range only (shifts from
    the smallest restricted eigenvalue up to 0), without projection: the
    result is a doubly stochastic local minimizer of the plain energy,
    usable as a soft correspondence.

    When the energy is already convex on the polytope the range is empty
    and a single unshifted solve is returned.
    """
    marginals = _default_marginals(e, marginals)
    lo, _ = lambda_bar_range(e, tol=COARSE_TOL, rng=np.random.default_rng(cfg.seed))
    if lo >= 0:
        a_values = np.array([0.0])
    else:
        a_values = np.linspace(lo, 0.0, max(cfg.num_samples, 2))
    trace = _run_ladder(e, a_values, marginals, cfg.solver)
    return trace.final_coupling, trace


def bound_hierarchy(
    e: EnergySpec,
    cfg: HomotopyConfig = HomotopyConfig(),
    marginals: MarginalSpec | None = None,
) -> BoundReport:
    """Compute the full bound chain and the continuation upper bound.

    The chain spectral <= ds_plus <= ds_pp <= upper holds up to solver
    tolerance; ds (unshifted polytope minimum) is reported only when the
    quadratic is convex on the whole space, spectral only when there is
    no linear term.  Square problems only (slack-augmented injective
    problems are rounded by their callers after dropping the slack row).
    """
    if e.k != e.n:
        raise ValueError("bound hierarchy is defined for square energies")
    marginals = _default_marginals(e, marginals)
    rng = np.random.default_rng(cfg.seed)
    lam_bar_lo, _ = lambda_bar_range(e, rng=rng)
    lam_min = lambda_min_full(e, rng=rng)
    refined = cfg.solver.refined()

    _, ds_plus, _ = _solve_shift(e, lam_min, marginals, None, refined)
    _, ds_pp, _ = _solve_shift(e, lam_bar_lo, marginals, None, refined)
    spectral = e.n * lam_min + e.d if np.abs(e.c).max() == 0.0 else None
    ds = None
    if lam_min >= -1e-9:
        _, ds, _ = _solve_shift(e, 0.0, marginals, None, refined)
    perm, _ = homotopy_solve(e, replace(cfg, final_l2_projection=True), marginals)
    upper = eval_energy(e, perm)
    return BoundReport(
        ds_plus=ds_plus,
        ds_pp=ds_pp,
        upper=upper,
        permutation=perm,
        spectral=spectral,
        ds=ds,
    )
