"""Builders for quadratic matching energies.

Pairwise-distance energies couple a source metric (k points) with a
target metric (n points) through a penalty p on distance pairs:

    W_{(i,j),(k,l)} = p(d_source(i,k), d_target(j,l)),

so E(X) = x' W x sums the penalty over all pairs of proposed
correspondences.  For p(u,v) = (u-v)^2 the matvec factors into three
matrix products and never materializes W; penalties without that
structure (Gaussian kernel, absolute difference) build W densely and are
size-guarded.  Linear terms come from descriptor similarity or from
user-pinned correspondences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    MAX_DENSE_DIM,
    DenseQuadratic,
    EnergySpec,
    OperatorQuadratic,
    stack,
)
from .spectral import COARSE_TOL, lambda_bar_range

__all__ = [
    "MetricData",
    "UserConstraints",
    "gw_energy",
    "log_gw_energy",
    "gaussian_energy",
    "graph_matching_energy",
    "fried_energy",
    "fried_scale",
    "coarse_to_fine_terms",
    "descriptor_linear_term",
]


def _check_metric(D: np.ndarray, name: str) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"{name} must be square, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValueError(f"{name} has non-finite entries")
    if np.abs(D - D.T).max() > 1e-12:
        raise ValueError(f"{name} must be symmetric (tol 1e-12)")
    if np.abs(np.diagonal(D)).max() > 1e-12:
        raise ValueError(f"{name} must have zero diagonal (tol 1e-12)")
    if D.min() < 0:
        raise ValueError(f"{name} must be nonnegative")
    return D


@dataclass(frozen=True, eq=False)
class MetricData:
    """Pairwise distances of the source (k points) and target (n points)."""

    d_source: np.ndarray
    d_target: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d_source", _check_metric(self.d_source, "d_source"))
        object.__setattr__(self, "d_target", _check_metric(self.d_target, "d_target"))

    @property
    def k(self) -> int:
        return self.d_source.shape[0]

    @property
    def n(self) -> int:
        return self.d_target.shape[0]


@dataclass(frozen=True)
class UserConstraints:
    """Known correspondences (source index, target index) with an optional
    penalty weight; weight None defers to the restricted-spectrum default
    in :func:`coarse_to_fine_terms`."""

    pairs: tuple[tuple[int, int], ...]
    weight: float | None = None

    def __post_init__(self):
        pairs = tuple((int(s), int(t)) for s, t in self.pairs)
        sources = [s for s, _ in pairs]
        targets = [t for _, t in pairs]
        if len(set(sources)) != len(sources):
            raise ValueError("constraint sources must be distinct")
        if len(set(targets)) != len(targets):
            raise ValueError("constraint targets must be distinct")
        object.__setattr__(self, "pairs", pairs)


def _sq_diff_energy(S: np.ndarray, T: np.ndarray) -> EnergySpec:
    """Energy with W entries (S_ik - T_jl)^2; matvec via the expansion
    S_ik^2 + T_jl^2 - 2 S_ik T_jl into row-sum, column-sum, and
    congruence products (O(k^2 n + k n^2) per call)."""
    k, n = S.shape[0], T.shape[0]
    S2, T2 = S * S, T * T

    def matvec(x: np.ndarray) -> np.ndarray:
        X = x.reshape((k, n), order="F")
        M = (S2 @ X.sum(axis=1))[:, None] + (T2 @ X.sum(axis=0))[None, :]
        M -= 2.0 * (S @ X @ T)
        return M.flatten(order="F")

    return EnergySpec(k, n, OperatorQuadratic(matvec, k * n))


def gw_energy(m: MetricData) -> EnergySpec:
    """Squared-difference distortion of corresponding distances:
    p(u, v) = (u - v)^2."""
    return _sq_diff_energy(m.d_source, m.d_target)


def log_gw_energy(m: MetricData, eps_floor: float | None = None) -> EnergySpec:
    """Relative distortion penalty p(u, v) = log(u/v)^2.

    Distances are floored at ``eps_floor`` (default 1e-6 times the
    largest distance) before the log, so the zero diagonals stay finite.
    Floored-vs-floored pairs contribute zero; a floored diagonal against
    a genuine distance yields a large finite penalty on entry pairs that
    never co-occur in a matching matrix, so matching energies are
    unaffected by the floor.
    """
    top = max(m.d_source.max(), m.d_target.max())
    if eps_floor is None:
        eps_floor = 1e-6 * top
    if eps_floor <= 0:
        raise ValueError("all distances are zero; log penalty undefined")
    LS = np.log(np.maximum(m.d_source, eps_floor))
    LT = np.log(np.maximum(m.d_target, eps_floor))
    return _sq_diff_energy(LS, LT)


def gaussian_energy(m: MetricData, sigma: float = 0.2) -> EnergySpec:
    """Similarity reward p(u, v) = -exp(-(u-v)^2 / sigma^2).

    All coefficients are negative (pairs of correspondences with close
    distances are rewarded), giving the concave-leaning instance family.
    The kernel does not factor, so W is built densely; the usual dense
    size guard applies.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    dim = m.k * m.n
    if dim > MAX_DENSE_DIM:
        raise ValueError(f"dense kernel energy needs k*n <= {MAX_DENSE_DIM}, got {dim}")
    diff = m.d_source[:, None, :, None] - m.d_target[None, :, None, :]
    W4 = -np.exp(-(diff * diff) / (sigma * sigma))
    return EnergySpec(m.k, m.n, DenseQuadratic(W4.reshape((dim, dim), order="F")))


def graph_matching_energy(A: np.ndarray, B: np.ndarray) -> EnergySpec:
    """E(X) = ||A X - X B||_F^2 for adjacency/weight matrices A (k x k)
    and B (n x n); W = M'M for the linear map M(X) = AX - XB, hence PSD.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"B must be square, got {B.shape}")
    k, n = A.shape[0], B.shape[0]

    def matvec(x: np.ndarray) -> np.ndarray:
        X = x.reshape((k, n), order="F")
        R = A @ X - X @ B
        return (A.T @ R - R @ B.T).flatten(order="F")

    return EnergySpec(k, n, OperatorQuadratic(matvec, k * n))


def _offdiag_mean(D: np.ndarray) -> float:
    m = D.shape[0]
    if m < 2:
        return 0.0
    return float((D.sum() - np.trace(D)) / (m * (m - 1)))


def fried_scale(d_images: np.ndarray, d_grid: np.ndarray) -> float:
    """Scale c* equalizing the off-diagonal means of the two metrics."""
    S = _check_metric(d_images, "d_images")
    T = _check_metric(d_grid, "d_grid")
    mean_s = _offdiag_mean(S)
    if mean_s == 0.0:
        raise ValueError("image distances have zero mean; scale undefined")
    return _offdiag_mean(T) / mean_s


def fried_energy(d_images: np.ndarray, d_grid: np.ndarray) -> EnergySpec:
    """Arrangement energy |c* d_images(i,k) - d_grid(j,l)| with the scale
    c* fixed so both metrics have equal off-diagonal means.

    The absolute difference does not factor, so W is dense and
    size-guarded.  Scaling d_images leaves the minimizing assignments
    unchanged (c* absorbs the scale).
    """
    S = _check_metric(d_images, "d_images")
    T = _check_metric(d_grid, "d_grid")
    k, n = S.shape[0], T.shape[0]
    dim = k * n
    if dim > MAX_DENSE_DIM:
        raise ValueError(f"dense arrangement energy needs k*n <= {MAX_DENSE_DIM}, got {dim}")
    c_star = fried_scale(S, T)
    W4 = np.abs(c_star * S[:, None, :, None] - T[None, :, None, :])
    return EnergySpec(k, n, DenseQuadratic(W4.reshape((dim, dim), order="F")))


def coarse_to_fine_terms(
    m: MetricData,
    constraints: UserConstraints,
    base: EnergySpec,
    eps_floor: float | None = None,
    rng: np.random.Generator | int | None = None,
) -> EnergySpec:
    """Add the pinned-correspondence linear term to ``base``.

    For each pinned pair (s, t) the term rewards X_{s,t} directly and
    charges every candidate pair (k, l) the relative-distortion penalty
    p(d_source(s, k), d_target(t, l)) of its distances to the pin (same
    log penalty and flooring as :func:`log_gw_energy`).  The weight
    defaults to 0.01 times the largest restricted-spectrum magnitude of
    the base quadratic.
    """
    if not constraints.pairs:
        return base
    k, n = base.k, base.n
    for s, t in constraints.pairs:
        if not (0 <= s < k and 0 <= t < n):
            raise ValueError(f"pinned pair ({s}, {t}) out of range for {k}x{n}")
    if m.k != k or m.n != n:
        raise ValueError("metric size does not match the energy")
    w = constraints.weight
    if w is None:
        lo, hi = lambda_bar_range(base, tol=COARSE_TOL, rng=rng)
        w = 0.01 * max(abs(lo), abs(hi))

    top = max(m.d_source.max(), m.d_target.max())
    if eps_floor is None:
        eps_floor = 1e-6 * top
    if eps_floor <= 0:
        raise ValueError("all distances are zero; log penalty undefined")
    LS = np.log(np.maximum(m.d_source, eps_floor))
    LT = np.log(np.maximum(m.d_target, eps_floor))

    C = np.zeros((k, n))
    for s, t in constraints.pairs:
        C[s, t] -= 1.0
        diff = LS[s][:, None] - LT[t][None, :]
        C += diff * diff
    return base.with_linear_term(stack(w * C))


def descriptor_linear_term(C: np.ndarray) -> np.ndarray:
    """Stacked linear coefficients from a k-by-n descriptor-dissimilarity
    matrix (entry (i, j) charges the correspondence i -> j); add to an
    energy via EnergySpec.with_linear_term."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={C.ndim}")
    if not np.all(np.isfinite(C)):
        raise ValueError("descriptor costs must be finite")
    return stack(C)
