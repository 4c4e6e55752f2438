"""Exhaustive and dense-linear-algebra oracles for small instances.

These exist to certify the iterative pipeline in tests: exact minima by
enumeration, and restricted-spectrum values by dense eigendecomposition
on an explicit orthonormal basis of the coupling polytope's direction
space.  Nothing here scales past desk-size problems, by design.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import eigvalsh, null_space

from .core import EnergySpec, MarginalSpec, Permutation

__all__ = [
    "enumerate_permutations",
    "brute_force_min",
    "brute_force_injective",
    "dense_subspace_eigs",
]

# Cached permutation tables keyed by (n, k); lexicographic row order.
_perm_cache: dict[tuple[int, int], np.ndarray] = {}


def enumerate_permutations(n: int, k: int | None = None) -> np.ndarray:
    """All injective assignments of k sources into n targets as an
    (n!/(n-k)!, k) int array in lexicographic row order (k defaults to n).
    Cached; callers must not mutate the result."""
    k = n if k is None else k
    key = (n, k)
    if key not in _perm_cache:
        # int8 keeps the n=10 table at 36MB; callers upcast for index math
        table = np.array(list(itertools.permutations(range(n), k)), dtype=np.int8)
        table.flags.writeable = False
        _perm_cache[key] = table
    return _perm_cache[key]


def _batch_energies(e: EnergySpec, assignments: np.ndarray) -> np.ndarray:
    """Energies of one-hot matrices for every assignment row, evaluated by
    gathers on the dense coefficient tensor (pairs (i, j) with i <= j,
    using symmetry of W).  Rows are processed in chunks to bound the
    upcast index scratch."""
    k, n = e.k, e.n
    W = e.quadratic.dense()
    V = W.reshape((k, n, k, n), order="F")
    C = e.c.reshape((k, n), order="F")
    flats = {
        (i, j): np.ascontiguousarray(V[i, :, j, :]).ravel()
        for i in range(k)
        for j in range(i, k)
    }
    out = np.empty(assignments.shape[0])
    chunk = 1 << 19
    for lo in range(0, assignments.shape[0], chunk):
        block = assignments[lo : lo + chunk].astype(np.int64)
        vals = np.full(block.shape[0], e.d)
        for i in range(k):
            vals += C[i, block[:, i]]
            vals += flats[i, i][block[:, i] * n + block[:, i]]
            for j in range(i + 1, k):
                vals += 2.0 * flats[i, j][block[:, i] * n + block[:, j]]
        out[lo : lo + chunk] = vals
    return out


def brute_force_min(e: EnergySpec, max_size: int = 8) -> tuple[Permutation, float]:
    """Exact global minimum of E over all n! permutations (square energies
    only).  Ties break to the lexicographically smallest assignment.

    ``max_size`` guards the factorial blow-up; raise it deliberately when
    a test budgets for n=10 (3.6M permutations, ~1 s vectorized).
    """
    if e.k != e.n:
        raise ValueError(f"square energy required, got k={e.k} n={e.n}")
    if e.n > max_size:
        raise ValueError(f"n={e.n} exceeds enumeration bound {max_size}")
    perms = enumerate_permutations(e.n)
    vals = _batch_energies(e, perms)
    best = int(np.argmin(vals))
    return Permutation(perms[best]), float(vals[best])


def brute_force_injective(e: EnergySpec, max_count: int = 10**6) -> tuple[Permutation, float]:
    """Exact minimum of E over injective assignments of the k sources into
    the n targets; lexicographic tie-break."""
    count = 1
    for t in range(e.n, e.n - e.k, -1):
        count *= t
    if count > max_count:
        raise ValueError(f"{count} injections exceed enumeration bound {max_count}")
    table = enumerate_permutations(e.n, e.k)
    vals = _batch_energies(e, table)
    best = int(np.argmin(vals))
    return Permutation(table[best]), float(vals[best])


def dense_subspace_eigs(e: EnergySpec) -> tuple[float, float]:
    """Extreme eigenvalues of the quadratic part restricted to the
    direction space of the coupling polytope, via an explicit orthonormal
    nullspace basis of the marginal constraint matrix.

    Dense cross-check for the matvec-only power iteration; cost is a full
    eigendecomposition of the (k-1)(n-1)-dimensional restricted matrix.
    """
    k, n = e.k, e.n
    A = marginal_constraint_matrix(k, n)
    F = null_space(A)
    if F.shape[1] == 0:
        raise ValueError("coupling polytope has no interior directions")
    W = e.quadratic.dense()
    M = F.T @ W @ F
    vals = eigvalsh(0.5 * (M + M.T))
    return float(vals[0]), float(vals[-1])


def marginal_constraint_matrix(k: int, n: int) -> np.ndarray:
    """(k+n)-by-(k*n) matrix whose rows sum stacked entries along each row
    and column of the k-by-n matrix (rank k+n-1)."""
    A = np.zeros((k + n, k * n))
    for i in range(k):
        for j in range(n):
            A[i, j * k + i] = 1.0
            A[k + j, j * k + i] = 1.0
    return A
