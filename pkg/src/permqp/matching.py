"""Injective matching and upsampling helpers.

A k-into-n injective matching (k < n) is handled by adding one slack row
that absorbs the n - k unmatched targets: the augmented (k+1)-by-n
polytope has row marginals (n-k, 1, ..., 1) and unit column marginals,
its 0/1 vertices are exactly the injective assignments, and the energy
coefficients touching the slack row are zero.  The slack row sits first
(index 0) by convention.

Upsampling a coarse matching to fine sample sets comes in two flavors:
a sparsity pattern restricting the fine problem to candidates that agree
with the coarse anchors (solved as a quadratic matching with forbidden
entries penalized), and a greedy per-point interpolation that scores
each candidate target by its distance distortion against the anchors.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .core import (
    EnergySpec,
    MarginalSpec,
    MaskedQuadratic,
    OperatorQuadratic,
)
from .energies import MetricData
from .spectral import COARSE_TOL, lambda_bar_range

__all__ = [
    "SparsityPattern",
    "injective_marginals",
    "augment_injective",
    "strip_slack",
    "sparsity_pattern",
    "limited_support_energy",
    "greedy_interpolate",
]


def injective_marginals(k: int, n: int) -> MarginalSpec:
    """Marginals of the slack-augmented injective polytope: row sums
    (n-k, 1, ..., 1) over k+1 rows, unit column sums."""
    if k >= n:
        raise ValueError(f"injective matching needs k < n, got k={k} n={n}")
    row = np.ones(k + 1)
    row[0] = n - k
    return MarginalSpec(row, np.ones(n))


def augment_injective(e: EnergySpec) -> EnergySpec:
    """Embed a k-by-n energy into the (k+1)-by-n slack-augmented problem;
    slack-row entries carry zero energy coefficients."""
    k, n = e.k, e.n
    if k >= n:
        raise ValueError(f"injective augmentation needs k < n, got k={k} n={n}")
    dim_aug = (k + 1) * n
    base_idx = np.arange(k * n)
    j, i = divmod(base_idx, k)
    aug_of_base = j * (k + 1) + i + 1
    base = e.quadratic

    def matvec(xa: np.ndarray) -> np.ndarray:
        ya = np.zeros(dim_aug)
        ya[aug_of_base] = base.matvec(xa[aug_of_base])
        return ya

    c_aug = np.zeros(dim_aug)
    c_aug[aug_of_base] = e.c
    return EnergySpec(k + 1, n, OperatorQuadratic(matvec, dim_aug), c_aug, e.d)


def strip_slack(values: np.ndarray) -> np.ndarray:
    """Drop the slack row (row 0) of an augmented coupling or matrix."""
    V = np.asarray(values, dtype=float)
    if V.ndim != 2 or V.shape[0] < 2:
        raise ValueError(f"expected an augmented matrix, got shape {V.shape}")
    return V[1:].copy()


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Boolean permissibility mask over the k-by-n correspondence grid;
    every row keeps at least one candidate."""

    permissible: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.permissible, dtype=bool).copy()
        if P.ndim != 2:
            raise ValueError("permissible mask must be a matrix")
        if not P.any(axis=1).all():
            raise ValueError("every source row needs at least one permissible target")
        P.flags.writeable = False
        object.__setattr__(self, "permissible", P)

    @property
    def row_fraction(self) -> np.ndarray:
        """Fraction of permissible targets per source row."""
        return self.permissible.mean(axis=1)


def _anchor_features(D: np.ndarray, anchors: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    """For each point, the indices (into ``anchors``) of its ``count``
    closest anchors and the distances to them, in that anchor order."""
    dist = D[:, anchors]
    order = np.argsort(dist, axis=1, kind="stable")[:, :count]
    feats = np.take_along_axis(dist, order, axis=1)
    return order, feats


def sparsity_pattern(
    m_fine: MetricData,
    coarse: list[tuple[int, int]] | tuple[tuple[int, int], ...],
    keep_frac: float = 0.2,
) -> SparsityPattern:
    """Candidate correspondences for the fine problem, scored against the
    coarse matches.

    Each fine source point is described by its distances to its (up to) 5
    nearest matched source anchors; each target is scored by the distance
    of its own feature, taken over the images of those anchors, and the
    best ``keep_frac`` fraction of targets is kept.  The same procedure
    runs from the target side and the two masks are united, so the
    pattern is symmetric in construction and idempotent under
    re-symmetrization.
    """
    if not (0 < keep_frac <= 1):
        raise ValueError("keep_frac must lie in (0, 1]")
    pairs = [(int(s), int(t)) for s, t in coarse]
    if not pairs:
        raise ValueError("anchor set is empty")
    k, n = m_fine.k, m_fine.n
    src = np.array([s for s, _ in pairs])
    tgt = np.array([t for _, t in pairs])
    if src.min() < 0 or src.max() >= k or tgt.min() < 0 or tgt.max() >= n:
        raise ValueError("anchor indices out of range")
    count = min(5, len(pairs))
    P = np.zeros((k, n), dtype=bool)

    def mark(D_from: np.ndarray, anch_from: np.ndarray,
             D_to: np.ndarray, anch_to: np.ndarray,
             keep: int, transpose: bool) -> None:
        order, feats = _anchor_features(D_from, anch_from, count)
        dist_to = D_to[:, anch_to]
        for i in range(D_from.shape[0]):
            diffs = dist_to[:, order[i]] - feats[i][None, :]
            score = (diffs * diffs).sum(axis=1)
            best = np.argsort(score, kind="stable")[:keep]
            if transpose:
                P[best, i] = True
            else:
                P[i, best] = True

    mark(m_fine.d_source, src, m_fine.d_target, tgt, ceil(keep_frac * n), False)
    mark(m_fine.d_target, tgt, m_fine.d_source, src, ceil(keep_frac * k), True)
    return SparsityPattern(P)


def limited_support_energy(
    base: EnergySpec,
    pattern: SparsityPattern,
    rho: float | None = None,
    rng: np.random.Generator | int | None = None,
) -> EnergySpec:
    """Base energy evaluated on permissible entries only, plus a quadratic
    penalty rho on the forbidden ones (rho defaults to 100 times the
    largest restricted-spectrum magnitude, large enough to starve the
    forbidden support)."""
    mask = pattern.permissible
    if mask.shape != (base.k, base.n):
        raise ValueError(f"pattern shape {mask.shape} != energy shape {(base.k, base.n)}")
    if rho is None:
        lo, hi = lambda_bar_range(base, tol=COARSE_TOL, rng=rng)
        rho = 100.0 * max(abs(lo), abs(hi), 1e-12)
    flat = mask.flatten(order="F")
    quad = MaskedQuadratic(base.quadratic, flat, rho)
    return EnergySpec(base.k, base.n, quad, np.where(flat, base.c, 0.0), base.d)


def greedy_interpolate(
    m: MetricData,
    known: list[tuple[int, int]] | tuple[tuple[int, int], ...],
    queries: list[int] | np.ndarray,
    penalty=None,
) -> np.ndarray:
    """Per-point interpolation: each query source is assigned the unused
    target minimizing the summed penalty of its anchor distances,

        score(t) = sum_over_known_(s, u)  p(d_source(q, s), d_target(t, u)),

    with p defaulting to the squared difference.  Queries are independent
    (the result does not depend on query order, and targets chosen for
    one query are not excluded for the others)."""
    if penalty is None:
        penalty = lambda u, v: (u - v) ** 2
    pairs = [(int(s), int(t)) for s, t in known]
    if not pairs:
        raise ValueError("anchor set is empty")
    queries = np.asarray(queries, dtype=int)
    src = np.array([s for s, _ in pairs])
    tgt = np.array([t for _, t in pairs])
    if np.isin(queries, src).any():
        raise ValueError("queries overlap the known sources")
    free = np.setdiff1d(np.arange(m.n), tgt)
    if free.size == 0:
        raise ValueError("no free targets remain")
    out = np.empty(queries.size, dtype=int)
    target_feats = m.d_target[np.ix_(free, tgt)]
    for qi, q in enumerate(queries):
        scores = penalty(m.d_source[q, src][None, :], target_feats).sum(axis=1)
        out[qi] = free[int(np.argmin(scores))]
    return out
