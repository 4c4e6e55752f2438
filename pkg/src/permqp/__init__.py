"""Quadratic programs over permutations: convex-to-concave relaxations,
lower bounds, and matching pipelines."""

__version__ = "0.1.0"

from .core import (
    ConvergenceError,
    Coupling,
    DenseQuadratic,
    EnergySpec,
    InfeasibleMarginalsError,
    MarginalSpec,
    MaskedQuadratic,
    OperatorQuadratic,
    Permutation,
    QuadraticOperator,
    eval_energy,
    eval_shifted,
    stack,
    unstack,
)
from .sinkhorn import (
    ScalingState,
    kl_project,
    kl_project_log,
    kl_project_state,
    round_to_marginals,
)
from .spectral import (
    EigResult,
    lambda_bar_range,
    lambda_min_full,
    max_magnitude_eig,
    project_ds_tangent,
)
from .qpsolver import SolverConfig, SolveTrace, solve_quadratic
from .projection import l2_project, max_coordinate_project
from .energies import (
    MetricData,
    UserConstraints,
    coarse_to_fine_terms,
    descriptor_linear_term,
    fried_energy,
    fried_scale,
    gaussian_energy,
    graph_matching_energy,
    gw_energy,
    log_gw_energy,
)
from .matching import (
    SparsityPattern,
    augment_injective,
    greedy_interpolate,
    injective_marginals,
    limited_support_energy,
    sparsity_pattern,
    strip_slack,
)
from .homotopy import (
    BoundReport,
    HomotopyConfig,
    HomotopyTrace,
    bound_hierarchy,
    fuzzy_solve,
    homotopy_solve,
    relax_convex,
)
