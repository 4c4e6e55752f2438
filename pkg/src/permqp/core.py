"""Core types for quadratic energies over matchings.

An energy over k-by-n matching matrices X is

    E(X) = x' W x + c' x + d,

where x is the column-major stacking of X: entry (i, j) of X lands at
stacked index j * k + i.  W is a symmetric (k*n)-by-(k*n) matrix that may
be represented densely, as a matvec closure, or as a masked/penalized
wrapper around another operator.  All types here are immutable; arrays
are copied on ingest and marked read-only.

The shifted family

    E(X, a) = E(X) - a * ||X||_F^2 + a * n

agrees with E on matching matrices whose squared Frobenius norm equals
the number of columns n (permutations, and 0/1 vertices of the augmented
injective polytope), and is used to trade convexity against concavity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = [
    "ConvergenceError",
    "InfeasibleMarginalsError",
    "QuadraticOperator",
    "DenseQuadratic",
    "OperatorQuadratic",
    "MaskedQuadratic",
    "EnergySpec",
    "MarginalSpec",
    "Coupling",
    "Permutation",
    "stack",
    "unstack",
    "as_stacked",
    "eval_energy",
    "eval_shifted",
]

# Largest operator dimension (k*n) that dense materialization will accept.
MAX_DENSE_DIM = 4096


class ConvergenceError(RuntimeError):
    """An iterative routine failed to reach its tolerance within budget."""


class InfeasibleMarginalsError(ValueError):
    """Marginal data admit no coupling (mass mismatch or nonpositive entries)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def stack(X: np.ndarray) -> np.ndarray:
    """Column-major stacking of a k-by-n matrix into a length-k*n vector."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={X.ndim}")
    return X.flatten(order="F")


def unstack(x: np.ndarray, k: int, n: int) -> np.ndarray:
    """Inverse of :func:`stack`; returns a k-by-n matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape != (k * n,):
        raise ValueError(f"expected shape ({k * n},), got {x.shape}")
    return x.reshape((k, n), order="F").copy()


def as_stacked(x: Union["Coupling", "Permutation", np.ndarray], k: int, n: int) -> np.ndarray:
    """Normalize a coupling, permutation, matrix, or vector to stacked form."""
    if isinstance(x, Coupling):
        x = x.values
    elif isinstance(x, Permutation):
        x = x.to_matrix(n)
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape != (k, n):
            raise ValueError(f"expected shape ({k}, {n}), got {x.shape}")
        return stack(x)
    if x.shape != (k * n,):
        raise ValueError(f"expected {k * n} stacked entries, got shape {x.shape}")
    return x


class QuadraticOperator:
    """Symmetric quadratic form acting on stacked matching matrices."""

    dim: int

    def matvec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def quad(self, x: np.ndarray) -> float:
        """x' W x."""
        return float(x @ self.matvec(x))

    def dense(self, max_dim: int = MAX_DENSE_DIM) -> np.ndarray:
        """Materialize W as a dense symmetric matrix (small problems only)."""
        if self.dim > max_dim:
            raise ValueError(
                f"refusing dense materialization at dim={self.dim} > {max_dim}"
            )
        cols = [self.matvec(col) for col in np.eye(self.dim)]
        W = np.column_stack(cols)
        return 0.5 * (W + W.T)


class DenseQuadratic(QuadraticOperator):
    """Explicit matrix variant; symmetrized on load."""

    def __init__(self, matrix: np.ndarray):
        M = np.asarray(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {M.shape}")
        self.matrix = _readonly(0.5 * (M + M.T))
        self.dim = M.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def quad(self, x: np.ndarray) -> float:
        return float(x @ (self.matrix @ x))

    def dense(self, max_dim: int = MAX_DENSE_DIM) -> np.ndarray:
        return self.matrix.copy()


class OperatorQuadratic(QuadraticOperator):
    """Matvec-closure variant for energies with structured fast products.

    The closure must implement a symmetric operator; symmetry is probed by
    the test suite, not enforced here.
    """

    def __init__(self, matvec: Callable[[np.ndarray], np.ndarray], dim: int):
        if dim <= 0:
            raise ValueError("operator dimension must be positive")
        self._matvec = matvec
        self.dim = dim

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.asarray(self._matvec(x), dtype=float)
        if y.shape != (self.dim,):
            raise ValueError(f"matvec returned shape {y.shape}, expected ({self.dim},)")
        return y


class MaskedQuadratic(QuadraticOperator):
    """Base energy restricted to permissible entries plus a quadratic
    penalty rho on the forbidden ones:

        W' = M W M + rho * diag(1 - m),

    with m the stacked permissible mask and M = diag(m).
    """

    def __init__(self, base: QuadraticOperator, permissible: np.ndarray, rho: float):
        mask = np.asarray(permissible, dtype=bool).reshape(-1)
        if mask.shape != (base.dim,):
            raise ValueError(f"mask shape {mask.shape} != operator dim {base.dim}")
        if rho < 0:
            raise ValueError("penalty rho must be nonnegative")
        self.base = base
        self.mask = mask.copy()
        self.mask.flags.writeable = False
        self.rho = float(rho)
        self.dim = base.dim

    def matvec(self, x: np.ndarray) -> np.ndarray:
        xm = np.where(self.mask, x, 0.0)
        y = np.where(self.mask, self.base.matvec(xm), 0.0)
        y += self.rho * np.where(self.mask, 0.0, x)
        return y


@dataclass(frozen=True, eq=False)
class EnergySpec:
    """Energy E(X) = x' W x + c' x + d over k-by-n matching matrices."""

    k: int
    n: int
    quadratic: QuadraticOperator
    c: np.ndarray = None
    d: float = 0.0

    def __post_init__(self):
        if self.k <= 0 or self.n <= 0:
            raise ValueError("k and n must be positive")
        dim = self.k * self.n
        if self.quadratic.dim != dim:
            raise ValueError(
                f"quadratic dim {self.quadratic.dim} != k*n = {dim}"
            )
        c = np.zeros(dim) if self.c is None else np.asarray(self.c, dtype=float)
        if c.shape != (dim,):
            raise ValueError(f"linear term must have shape ({dim},), got {c.shape}")
        object.__setattr__(self, "c", _readonly(c))
        object.__setattr__(self, "d", float(self.d))

    @property
    def dim(self) -> int:
        return self.k * self.n

    def with_linear_term(self, extra_c: np.ndarray) -> "EnergySpec":
        """Return a copy with `extra_c` added to the linear coefficients."""
        extra = as_stacked(extra_c, self.k, self.n)
        return EnergySpec(self.k, self.n, self.quadratic, self.c + extra, self.d)

    def densify(self, max_dim: int = MAX_DENSE_DIM) -> "EnergySpec":
        """Copy with the quadratic part materialized densely."""
        return EnergySpec(
            self.k, self.n, DenseQuadratic(self.quadratic.dense(max_dim)), self.c, self.d
        )


@dataclass(frozen=True, eq=False)
class MarginalSpec:
    """Target row/column sums of a coupling; all entries positive."""

    row: np.ndarray
    col: np.ndarray
    # admissible relative mass mismatch between the two sides
    mass_tol: float = 1e-9

    def __post_init__(self):
        row = np.asarray(self.row, dtype=float)
        col = np.asarray(self.col, dtype=float)
        if row.ndim != 1 or col.ndim != 1:
            raise ValueError("marginals must be vectors")
        if np.any(row <= 0) or np.any(col <= 0):
            raise InfeasibleMarginalsError("marginal entries must be positive")
        mass_r, mass_c = row.sum(), col.sum()
        if abs(mass_r - mass_c) > self.mass_tol * max(mass_r, mass_c):
            raise InfeasibleMarginalsError(
                f"row mass {mass_r!r} != column mass {mass_c!r}"
            )
        object.__setattr__(self, "row", _readonly(row))
        object.__setattr__(self, "col", _readonly(col))

    @classmethod
    def doubly_stochastic(cls, n: int) -> "MarginalSpec":
        return cls(np.ones(n), np.ones(n))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.row.size, self.col.size)

    @property
    def mass(self) -> float:
        return float(self.row.sum())


@dataclass(frozen=True, eq=False)
class Coupling:
    """Nonnegative matrix with (approximately) prescribed marginals."""

    values: np.ndarray
    marginals: MarginalSpec
    # admissible relative marginal deviation on construction
    feas_tol: float = 1e-8

    def __post_init__(self):
        V = np.asarray(self.values, dtype=float)
        if V.shape != self.marginals.shape:
            raise ValueError(
                f"values shape {V.shape} != marginal shape {self.marginals.shape}"
            )
        if np.any(V < 0):
            raise ValueError("coupling entries must be nonnegative")
        err = marginal_error(V, self.marginals)
        if err > self.feas_tol:
            raise InfeasibleMarginalsError(
                f"marginal deviation {err:.3e} exceeds tolerance {self.feas_tol:.1e}"
            )
        object.__setattr__(self, "values", _readonly(V))

    @classmethod
    def uniform(cls, marginals: MarginalSpec) -> "Coupling":
        """Outer-product coupling r m' / mass; always exactly feasible."""
        V = np.outer(marginals.row, marginals.col) / marginals.mass
        return cls(V, marginals)

    @property
    def stacked(self) -> np.ndarray:
        return stack(self.values)


def marginal_error(values: np.ndarray, marginals: MarginalSpec) -> float:
    """Max relative deviation of row/column sums from the marginal spec."""
    r_err = np.abs(values.sum(axis=1) - marginals.row) / marginals.row
    c_err = np.abs(values.sum(axis=0) - marginals.col) / marginals.col
    return float(max(r_err.max(), c_err.max()))


class Permutation:
    """Integral matching: row i of the matrix carries a single 1 at
    column assignment[i].  Covers bijections (k = n) and injective
    assignments (k < n, distinct targets).
    """

    def __init__(self, assignment):
        a = np.array(assignment, dtype=int)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("assignment must be a nonempty integer vector")
        if np.any(a < 0):
            raise ValueError("assignment entries must be nonnegative")
        if np.unique(a).size != a.size:
            raise ValueError("assignment targets must be distinct")
        a.flags.writeable = False
        self.assignment = a

    def __repr__(self):
        return f"Permutation({self.assignment.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return self.assignment.shape == other.assignment.shape and bool(
            np.all(self.assignment == other.assignment)
        )

    def __hash__(self):
        return hash(tuple(self.assignment.tolist()))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @classmethod
    def from_matrix(cls, X: np.ndarray, tol: float = 1e-9) -> "Permutation":
        X = np.asarray(X, dtype=float)
        a = X.argmax(axis=1)
        P = np.zeros_like(X)
        P[np.arange(X.shape[0]), a] = 1.0
        if np.abs(X - P).max() > tol:
            raise ValueError("matrix is not a 0/1 matching matrix")
        return cls(a)

    @property
    def k(self) -> int:
        return self.assignment.size

    def to_matrix(self, n: int | None = None) -> np.ndarray:
        n = self.k if n is None else n
        if n < self.assignment.max() + 1:
            raise ValueError("target count too small for assignment")
        X = np.zeros((self.k, n))
        X[np.arange(self.k), self.assignment] = 1.0
        return X

    def to_stacked(self, n: int | None = None) -> np.ndarray:
        return stack(self.to_matrix(n))


def eval_energy(e: EnergySpec, x) -> float:
    """E(x) = x' W x + c' x + d for a coupling, matrix, or stacked vector."""
    v = as_stacked(x, e.k, e.n)
    return e.quadratic.quad(v) + float(e.c @ v) + e.d


def eval_shifted(e: EnergySpec, x, a: float) -> float:
    """Shifted energy E(x, a) = E(x) - a ||x||^2 + a n.

    Agrees with E on permutation matrices (and on 0/1 vertices of the
    augmented injective polytope), where ||x||^2 = n.
    """
    v = as_stacked(x, e.k, e.n)
    return eval_energy(e, v) - a * float(v @ v) + a * e.n
